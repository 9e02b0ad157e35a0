//! Step sizes `η_k = 4/(μ(k+B))` with `B = max{4L/μ, 3}` and the MGF
//! parameters `t_k = μ(k−1+B)/16` that pair with them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    mu: f64,
    lip: f64,
    b: f64,
}

impl ScheduleSpec {
    pub fn new(mu: f64, lip: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::param(
                "mu",
                format!("must be positive and finite, got {mu}"),
            ));
        }
        if !(lip.is_finite() && lip > 0.0) {
            return Err(Error::param(
                "lip",
                format!("must be positive and finite, got {lip}"),
            ));
        }
        if lip < mu {
            return Err(Error::param(
                "lip",
                format!("need L >= mu, got L={lip} < mu={mu}"),
            ));
        }
        Ok(Self {
            mu,
            lip,
            b: (4.0 * lip / mu).max(3.0),
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lip(&self) -> f64 {
        self.lip
    }

    /// The offset `B`; kept real-valued.
    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn step_size(&self, k: u64) -> f64 {
        4.0 / (self.mu * (k as f64 + self.b))
    }

    /// `t_k = μ(k−1+B)/16`, so `t_{k+1} = μ(k+B)/16`. Defined for `k ≥ 0`.
    pub fn mgf_parameter(&self, k: u64) -> f64 {
        self.mu * (k as f64 - 1.0 + self.b) / 16.0
    }

    /// `∏_{i=0}^{k} (1 − μη_i/2)` in closed form.
    pub fn contraction_product(&self, k: u64) -> f64 {
        let (b, k) = (self.b, k as f64);
        (b - 2.0) * (b - 1.0) / ((k + b - 1.0) * (k + b))
    }

    /// Same product, multiplied out factor by factor.
    pub fn contraction_product_iterative(&self, k: u64) -> f64 {
        (0..=k)
            .map(|i| 1.0 - self.mu * self.step_size(i) / 2.0)
            .product()
    }

    /// `∏_{i=j+1}^{k} (1 − μη_i/2)` via the closed-form ratio.
    pub fn tail_product(&self, j: u64, k: u64) -> f64 {
        if j >= k {
            return 1.0;
        }
        let b = self.b;
        let (j, k) = (j as f64, k as f64);
        (j + b - 1.0) * (j + b) / ((k + b - 1.0) * (k + b))
    }

    /// `t_{k+1} η_j ∏_{i=j+1}^{k}(1 − μη_i/2)`; never exceeds 1/4.
    pub fn weighted_tail(&self, j: u64, k: u64) -> f64 {
        self.mgf_parameter(k + 1) * self.step_size(j) * self.tail_product(j, k)
    }

    /// `t_{k+1} L Σ_{j=0}^{k} η_j² ∏_{i=j+1}^{k}(1 − μη_i/2)`; never exceeds L/μ.
    pub fn noise_sum(&self, k: u64) -> f64 {
        let s: f64 = (0..=k)
            .map(|j| {
                let eta = self.step_size(j);
                eta * eta * self.tail_product(j, k)
            })
            .sum();
        self.mgf_parameter(k + 1) * self.lip * s
    }

    /// `2(t_{k+1} − t_k) − μ t_{k+1} η_k`, which equals `−μ/8`.
    pub fn mgf_condition_margin(&self, k: u64) -> f64 {
        2.0 * (self.mgf_parameter(k + 1) - self.mgf_parameter(k))
            - self.mu * self.mgf_parameter(k + 1) * self.step_size(k)
    }
}
