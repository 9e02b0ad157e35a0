//! Stochastic gradient descent on strongly convex problems with closed-form
//! high-probability certificates.
//!
//! * [`problems`]: synthetic objectives and sub-Gaussian gradient oracles.
//! * [`schedule`]: the `4/(μ(k+B))` step sizes and their MGF parameters.
//! * [`engine`]: the SGD recursion, trajectories and the stopping rule.
//! * [`certificates`]: last-iterate, uniform-envelope and lower-bound curves.
//! * [`montecarlo`]: violation-rate estimation and sup-statistics.
//! * [`tester`]: the reduction from uniform-in-time optimization to testing.

pub mod certificates;
pub mod config;
pub mod engine;
pub mod error;
pub mod montecarlo;
pub mod plot;
pub mod problems;
pub mod report;
pub mod rng;
pub mod schedule;
pub mod tester;

pub use error::{Error, Result};
