//! Optimizer-to-test reduction: a bit string `v` is hidden in the location
//! `θ(v) = 2 Σ v_i 3^{-i}`, SGD is run on `f(x) = (μ/2)(x − θ)²` with
//! gradient samples `μx − X`, `X ~ N(μθ, σ²)`, and bit `k` is read off the
//! nearest codeword to `x_{n_k}`, where `n_k` is the first index at which
//! the optimizer's envelope drops below `(μ/8)·9^{-k}`.

use std::fmt;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::certificates::{beta_for_coverage, coverage_of_beta, BoundParams};
use crate::engine::drive;
use crate::error::{Error, Result};
use crate::montecarlo::{rate_and_se, run_indexed, SE_SLACK};
use crate::problems::{OracleModel, ProblemSpec};
use crate::rng::StreamId;
use crate::schedule::ScheduleSpec;

/// Deepest codeword whose numerator `2 Σ v_i 3^{K−i}` fits in a `u64`.
pub const MAX_DEPTH: usize = 40;
/// Indices scanned linearly before `ε` is assumed nonincreasing.
pub const ENVELOPE_HEAD: u64 = 64;
pub const DEFAULT_CAP: u64 = 500_000;
pub const MIN_TESTER_TRIALS: u64 = 50;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct BitSequence(Vec<u8>);

impl BitSequence {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() || bits.len() > MAX_DEPTH {
            return Err(Error::param(
                "bits",
                format!("depth must be in 1..={MAX_DEPTH}"),
            ));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::param("bits", "entries must be 0 or 1"));
        }
        Ok(Self(bits))
    }

    /// Bits of `index` in `depth` positions, most significant first.
    fn from_index(index: u64, depth: usize) -> Self {
        Self(
            (0..depth)
                .map(|i| ((index >> (depth - 1 - i)) & 1) as u8)
                .collect(),
        )
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    /// 1-based bit access.
    pub fn bit(&self, k: usize) -> u8 {
        self.0[k - 1]
    }

    pub fn prefix(&self, k: usize) -> Self {
        Self(self.0[..k].to_vec())
    }
}

impl std::str::FromStr for BitSequence {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::param("bits", format!("`{s}` is not a 0/1 string"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(bits)
    }
}

impl fmt::Display for BitSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl From<BitSequence> for String {
    fn from(b: BitSequence) -> String {
        b.to_string()
    }
}

impl TryFrom<String> for BitSequence {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

fn pow3(k: usize) -> u64 {
    3u64.pow(k as u32)
}

/// `2 Σ v_i 3^{K−i}`; `θ(v)` is this over `3^K`.
fn numerator(index: u64, depth: usize) -> u64 {
    (0..depth)
        .filter(|i| (index >> (depth - 1 - i)) & 1 == 1)
        .map(|i| 2 * pow3(depth - 1 - i))
        .sum()
}

fn theta_of_index(index: u64, depth: usize) -> f64 {
    numerator(index, depth) as f64 / pow3(depth) as f64
}

fn index_of(v: &BitSequence) -> u64 {
    v.0.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
}

/// `θ(v) = 2 Σ_{i=1}^{K} v_i 3^{-i}`, correctly rounded.
pub fn encode_theta(v: &BitSequence) -> f64 {
    theta_of_index(index_of(v), v.depth())
}

/// Nearest depth-`K` codeword to `theta` (clamped to `[0, 1]`); ties go to
/// the lexicographically smaller sequence.
pub fn project_to_v(theta: f64, depth: usize) -> Result<BitSequence> {
    if depth == 0 || depth > MAX_DEPTH {
        return Err(Error::param("depth", format!("must be in 1..={MAX_DEPTH}")));
    }
    if theta.is_nan() {
        return Err(Error::param("theta", "must not be NaN"));
    }
    let theta = theta.clamp(0.0, 1.0);
    // θ(index) is strictly increasing in index: find the last index at or below θ
    let (mut lo, mut hi) = (0u64, (1u64 << depth) - 1);
    if theta_of_index(hi, depth) <= theta {
        lo = hi;
    } else {
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if theta_of_index(mid, depth) <= theta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let best = if lo + 1 < (1u64 << depth) {
        let below = theta - theta_of_index(lo, depth);
        let above = theta_of_index(lo + 1, depth) - theta;
        if above < below {
            lo + 1
        } else {
            lo
        }
    } else {
        lo
    };
    Ok(BitSequence::from_index(best, depth))
}

/// `μ²(θ(v) − θ(v'))² / (2σ²)`, the KL divergence between `N(μθ(v), σ²)`
/// and `N(μθ(v'), σ²)`.
pub fn kl_between(v: &BitSequence, w: &BitSequence, mu: f64, sigma: f64) -> Result<f64> {
    if v.depth() != w.depth() {
        return Err(Error::DimensionMismatch {
            expected: v.depth(),
            got: w.depth(),
        });
    }
    let d = encode_theta(v) - encode_theta(w);
    Ok(mu * mu * d * d / (2.0 * sigma * sigma))
}

/// Smallest `n ≥ 1` with `eps(n) < (μ/8)·9^{-k}`.
///
/// The first [`ENVELOPE_HEAD`] indices are scanned one by one; beyond that
/// `eps` must be nonincreasing and the search doubles then bisects. The
/// answer is checked on both sides before it is returned.
pub fn schedule_nk(eps: impl Fn(u64) -> f64, mu: f64, k: usize, cap: u64) -> Result<u64> {
    if k < 1 {
        return Err(Error::param("k", "bit index starts at 1"));
    }
    let threshold = mu / 8.0 * 9f64.powi(-(k as i32));
    let below = |n: u64| eps(n) < threshold;
    let head_end = ENVELOPE_HEAD.min(cap);
    for n in 1..=head_end {
        if below(n) {
            return Ok(n);
        }
    }
    let mut lo = head_end;
    let mut hi = head_end;
    loop {
        if hi >= cap {
            return Err(Error::Unattainable { bit: k, cap });
        }
        hi = hi.saturating_mul(2).min(cap);
        if below(hi) {
            break;
        }
        lo = hi;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if below(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if !(below(hi) && !below(hi - 1)) {
        return Err(Error::Degenerate(format!(
            "n_{k} = {hi} failed the boundary check"
        )));
    }
    Ok(hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TesterConfig {
    pub v_true: BitSequence,
    pub mu: f64,
    pub sigma: f64,
    /// Target all-bits-correct probability; the envelope uses
    /// `β = 6(1 − coverage)/π²`.
    pub coverage: f64,
    pub trials: u64,
    pub master_seed: u64,
    pub cap: u64,
    /// Replace the Gaussian samples by their mean.
    pub noiseless: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TesterTrial {
    pub trial_index: u64,
    pub decoded: Option<BitSequence>,
    pub all_correct: bool,
    /// `|x_{n_k} − θ|` per bit.
    pub distances: Vec<f64>,
    /// Bits where the gap was inside the envelope yet decoding failed.
    pub bridge_failures: u32,
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TesterReport {
    pub v_true: BitSequence,
    pub theta: f64,
    pub mu: f64,
    pub sigma: f64,
    pub beta: f64,
    pub alpha: f64,
    pub coverage: f64,
    pub delta0: f64,
    pub n_schedule: Vec<u64>,
    pub trials: Vec<TesterTrial>,
    pub correct: u64,
    pub rate: f64,
    pub se: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Runs the reduction `trials` times and reports the all-bits-correct rate.
pub fn run_test_experiment(cfg: &TesterConfig, workers: Option<usize>) -> Result<TesterReport> {
    if cfg.trials < MIN_TESTER_TRIALS {
        return Err(Error::param(
            "trials",
            format!("need >= {MIN_TESTER_TRIALS}"),
        ));
    }
    let beta = beta_for_coverage(cfg.coverage)?;
    let alpha = 1.0 - coverage_of_beta(beta)?;
    let theta = encode_theta(&cfg.v_true);
    let spec = ProblemSpec::tester_location(cfg.mu, theta)?;
    let oracle = if cfg.noiseless {
        OracleModel::new(crate::problems::NoiseKind::Zero, cfg.sigma)?
    } else {
        OracleModel::tester_sample(cfg.sigma)?
    };
    let sched = ScheduleSpec::new(cfg.mu, cfg.mu)?;
    let x0 = [0.0];
    let delta0 = spec.gap(&x0)?;
    let params = BoundParams::new(cfg.mu, cfg.mu, delta0, cfg.sigma)?;
    let eps = |n: u64| params.envelope(beta, n).unwrap_or(f64::INFINITY);

    let depth = cfg.v_true.depth();
    let n_schedule = (1..=depth)
        .map(|k| schedule_nk(eps, cfg.mu, k, cfg.cap))
        .collect::<Result<Vec<u64>>>()?;
    let horizon = *n_schedule.iter().max().unwrap();
    let eps_at: Vec<f64> = n_schedule.iter().map(|&n| eps(n)).collect();

    let trials = run_indexed(cfg.trials, workers, |i| {
        let mut bits = Vec::with_capacity(depth);
        let mut distances = Vec::with_capacity(depth);
        let mut bridge_failures = 0;
        let mut next = 0;
        let res = drive(
            &spec,
            &oracle,
            &sched,
            &x0,
            horizon,
            StreamId::new(cfg.master_seed, i),
            |v| {
                while next < depth && n_schedule[next] == v.k {
                    let k = next + 1;
                    let x = v.x[0];
                    let bit = project_to_v(x, k).map(|p| p.bit(k)).unwrap_or(2);
                    let correct = bit == cfg.v_true.bit(k);
                    if v.gap <= eps_at[next] && !correct {
                        bridge_failures += 1;
                    }
                    bits.push(bit.min(1));
                    distances.push((x - theta).abs());
                    next += 1;
                }
                if next == depth {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            },
        );
        match res {
            Ok(_) => {
                let decoded = BitSequence::new(bits).ok();
                let all_correct = decoded.as_ref() == Some(&cfg.v_true);
                TesterTrial {
                    trial_index: i,
                    decoded,
                    all_correct,
                    distances,
                    bridge_failures,
                    aborted: false,
                }
            }
            Err(_) => TesterTrial {
                trial_index: i,
                decoded: None,
                all_correct: false,
                distances,
                bridge_failures,
                aborted: true,
            },
        }
    })?;

    let correct = trials.iter().filter(|t| t.all_correct).count() as u64;
    let (rate, se) = rate_and_se(correct, cfg.trials);
    let threshold = cfg.coverage - SE_SLACK * se;
    Ok(TesterReport {
        v_true: cfg.v_true.clone(),
        theta,
        mu: cfg.mu,
        sigma: cfg.sigma,
        beta,
        alpha,
        coverage: cfg.coverage,
        delta0,
        n_schedule,
        trials,
        correct,
        rate,
        se,
        threshold,
        pass: rate >= threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &str) -> BitSequence {
        s.parse().unwrap()
    }

    // exhaustive nearest codeword, smaller index wins ties
    fn brute_project(theta: f64, depth: usize) -> BitSequence {
        let theta = theta.clamp(0.0, 1.0);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for i in 0..(1u64 << depth) {
            let v = BitSequence::from_index(i, depth);
            let t: f64 = v
                .bits()
                .iter()
                .enumerate()
                .map(|(j, &b)| 2.0 * b as f64 * 3f64.powi(-(j as i32 + 1)))
                .sum();
            let d = (theta - t).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        BitSequence::from_index(best, depth)
    }

    #[test]
    fn encode_examples() {
        assert!((encode_theta(&bits("100")) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(encode_theta(&bits("000")), 0.0);
        assert!((encode_theta(&bits("11")) - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn project_examples() {
        assert_eq!(project_to_v(0.7, 3).unwrap(), bits("100"));
        assert_eq!(brute_project(0.7, 3), bits("100"));
        for k in 1..=10 {
            let mut want = vec![0u8; k];
            want[0] = 1;
            assert_eq!(project_to_v(2.0 / 3.0, k).unwrap().bits(), &want[..]);
        }
        assert_eq!(project_to_v(0.5, 1).unwrap(), bits("1"));
        assert_eq!(project_to_v(-3.0, 2).unwrap(), bits("00"));
        assert_eq!(project_to_v(7.0, 2).unwrap(), bits("11"));
        assert!(project_to_v(f64::NAN, 2).is_err());
        assert!(project_to_v(0.5, 0).is_err());
    }

    #[test]
    fn projection_tie_goes_to_smaller() {
        // midpoint of 0 and 2/3
        assert_eq!(project_to_v(1.0 / 3.0, 1).unwrap(), bits("0"));
    }

    #[test]
    fn kl_examples() {
        assert!((kl_between(&bits("0"), &bits("1"), 1.0, 1.0).unwrap() - 2.0 / 9.0).abs() < 1e-15);
        assert_eq!(kl_between(&bits("10"), &bits("10"), 1.0, 1.0).unwrap(), 0.0);
        let v = kl_between(&bits("10"), &bits("11"), 1.0, 1.0).unwrap();
        assert!((v - 2.0 / 81.0).abs() < 1e-15);
        assert!(v <= 1.0 / 9.0 / 2.0);
        assert!(kl_between(&bits("1"), &bits("10"), 1.0, 1.0).is_err());
    }

    #[test]
    fn nk_examples() {
        assert_eq!(schedule_nk(|n| 1.0 / n as f64, 1.0, 1, 10_000).unwrap(), 73);
        assert_eq!(
            schedule_nk(|n| 1.0 / n as f64, 1.0, 2, 10_000).unwrap(),
            649
        );
        assert_eq!(
            schedule_nk(|n| 1.0 / n as f64, 1.0, 1, 100_000_000).unwrap(),
            73
        );
        assert!(matches!(
            schedule_nk(|n| 1.0 / n as f64, 1.0, 2, 600),
            Err(Error::Unattainable { bit: 2, cap: 600 })
        ));
        // non-monotone head is scanned linearly
        let bumpy = |n: u64| if n == 5 { 1e-9 } else { 1.0 / n as f64 };
        assert_eq!(schedule_nk(bumpy, 1.0, 1, 10_000).unwrap(), 5);
    }

    #[test]
    fn nk_for_envelope_checks_both_sides() {
        let p = BoundParams::new(1.0, 1.0, 0.0, 1.0).unwrap();
        let eps = |n| p.envelope(0.05, n).unwrap();
        let n1 = schedule_nk(eps, 1.0, 1, 10_000_000).unwrap();
        let thr = 1.0 / 72.0;
        assert!(eps(n1) < thr && eps(n1 - 1) >= thr);
        // independent linear scan
        let scan = (1u64..).find(|&n| eps(n) < thr).unwrap();
        assert_eq!(n1, scan);
    }

    #[test]
    fn bitsequence_parsing() {
        assert!("".parse::<BitSequence>().is_err());
        assert!("102".parse::<BitSequence>().is_err());
        assert_eq!(bits("0110").to_string(), "0110");
        assert_eq!(bits("0110").bit(2), 1);
        let j = serde_json::to_string(&bits("101")).unwrap();
        assert_eq!(j, "\"101\"");
    }

    #[test]
    fn noiseless_experiment_recovers_bits() {
        let cfg = TesterConfig {
            v_true: bits("10"),
            mu: 1.0,
            sigma: 1.0,
            coverage: 0.9,
            trials: 50,
            master_seed: 1,
            cap: DEFAULT_CAP,
            noiseless: true,
        };
        let r = run_test_experiment(&cfg, Some(2)).unwrap();
        assert_eq!(r.correct, 50);
        assert_eq!(r.rate, 1.0);
        assert!(r.pass);
        assert!(r.n_schedule[0] < r.n_schedule[1]);
    }

    #[test]
    fn experiment_preconditions() {
        let mut cfg = TesterConfig {
            v_true: bits("101"),
            mu: 1.0,
            sigma: 1.0,
            coverage: 0.9,
            trials: 50,
            master_seed: 1,
            cap: DEFAULT_CAP,
            noiseless: false,
        };
        assert!(matches!(
            run_test_experiment(&cfg, None),
            Err(Error::Unattainable { bit: 3, .. })
        ));
        cfg.v_true = bits("1");
        cfg.trials = 10;
        assert!(run_test_experiment(&cfg, None).is_err());
    }

    #[test]
    fn brute_projection_agrees_small() {
        for depth in 1..=6 {
            for i in 0..=1000 {
                let t = i as f64 / 1000.0 * 1.2 - 0.1;
                assert_eq!(
                    project_to_v(t, depth).unwrap(),
                    brute_project(t, depth),
                    "{t} {depth}"
                );
            }
        }
    }
}
