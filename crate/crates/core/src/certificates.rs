//! Closed-form bound curves: last-iterate, uniform-in-time envelope, the
//! `log log n / n` lower curve, and a prior-art `log k · log(1/β)/k` reference.
//!
//! All logarithms are natural except the explicit `log₂ k` inside the
//! envelope. Upper bounds are stated for unit-scale noise; a noise scale
//! `σ ≠ 1` is handled by the exact rescaling `x = σ x̃`, which keeps `μ, L`
//! and multiplies the gap by `σ²` (so `Δ0` enters as `Δ0/σ²`).

use std::collections::BTreeMap;
use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest admissible envelope β (exclusive): `6/π²`.
pub const BETA_ENVELOPE_MAX: f64 = 6.0 / (PI * PI);

fn offset_b(mu: f64, lip: f64) -> f64 {
    (4.0 * lip / mu).max(3.0)
}

fn check_moduli(mu: f64, lip: f64, delta0: f64) -> Result<()> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::param("mu", "must be positive and finite"));
    }
    if !(lip.is_finite() && lip >= mu) {
        return Err(Error::param("lip", "must be finite and >= mu"));
    }
    if !(delta0.is_finite() && delta0 >= 0.0) {
        return Err(Error::param("delta0", "must be finite and >= 0"));
    }
    Ok(())
}

fn check_beta_unit(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::param(
            "beta",
            format!("must lie in (0, 1), got {beta}"),
        ))
    }
}

fn check_beta_envelope(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < BETA_ENVELOPE_MAX {
        Ok(())
    } else {
        Err(Error::param(
            "beta",
            format!("must lie in (0, 6/π²) = (0, {BETA_ENVELOPE_MAX:.6}), got {beta}"),
        ))
    }
}

/// `(16μ ln(1/β) + μ²(B−1)Δ0 + 16L) / (μ²(k+B−1))`, valid for each fixed `k`
/// with probability `≥ 1 − β`.
pub fn last_iterate_bound(mu: f64, lip: f64, delta0: f64, beta: f64, k: u64) -> Result<f64> {
    check_moduli(mu, lip, delta0)?;
    check_beta_unit(beta)?;
    let b = offset_b(mu, lip);
    let num = 16.0 * mu * (1.0 / beta).ln() + mu * mu * (b - 1.0) * delta0 + 16.0 * lip;
    Ok(num / (mu * mu * (k as f64 + b - 1.0)))
}

/// `(16μ ln((log₂k+1)²/β) + μ²(B−1)Δ0 + 16(1+ln2)L) / (μ²(k+B−1))`, valid for
/// all `k ≥ 1` simultaneously with probability `≥ 1 − π²β/6`.
pub fn uniform_envelope(mu: f64, lip: f64, delta0: f64, beta: f64, k: u64) -> Result<f64> {
    check_moduli(mu, lip, delta0)?;
    check_beta_envelope(beta)?;
    if k < 1 {
        return Err(Error::param("k", "envelope is defined for k >= 1"));
    }
    Ok(envelope_unchecked(mu, lip, delta0, beta, k))
}

fn envelope_unchecked(mu: f64, lip: f64, delta0: f64, beta: f64, k: u64) -> f64 {
    let b = offset_b(mu, lip);
    let lk = (k as f64).log2() + 1.0;
    let num = 16.0 * mu * (lk * lk / beta).ln()
        + mu * mu * (b - 1.0) * delta0
        + 16.0 * (1.0 + LN_2) * lip;
    num / (mu * mu * (k as f64 + b - 1.0))
}

pub fn coverage_of_beta(beta: f64) -> Result<f64> {
    check_beta_envelope(beta)?;
    Ok(1.0 - PI * PI * beta / 6.0)
}

pub fn beta_for_coverage(target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::param(
            "coverage",
            format!("must lie in (0, 1), got {target}"),
        ));
    }
    Ok(6.0 * (1.0 - target) / (PI * PI))
}

/// `σ²(1−α) ln(ln n) / (48 μ n)`. Asymptotic: it carries no guarantee at any
/// particular finite `n`.
pub fn lower_bound_curve(mu: f64, sigma: f64, alpha: f64, n: u64) -> Result<f64> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::param("mu", "must be positive and finite"));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::param("sigma", "must be positive and finite"));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::param(
            "alpha",
            format!("must lie in [0, 1), got {alpha}"),
        ));
    }
    if n < 3 {
        return Err(Error::param("n", "lower curve needs n >= 3"));
    }
    let n = n as f64;
    Ok(sigma * sigma * (1.0 - alpha) * n.ln().ln() / (48.0 * mu * n))
}

/// `c · ln(k) · ln(1/β) / k`, a plotting reference with no guarantee.
pub fn prior_art_reference(beta: f64, k: u64, scale: f64) -> Result<f64> {
    check_beta_unit(beta)?;
    if k < 2 {
        return Err(Error::param("k", "reference curve needs k >= 2"));
    }
    Ok(prior_art_at(beta, k as f64, scale))
}

pub(crate) fn prior_art_at(beta: f64, k: f64, scale: f64) -> f64 {
    scale * k.ln() * (1.0 / beta).ln() / k
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateKind {
    LastIterate,
    UniformEnvelope,
    LowerCurve,
}

/// Parameters shared by the bound curves of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub mu: f64,
    pub lip: f64,
    pub b: f64,
    /// Initial gap in the original scale.
    pub delta0: f64,
    pub sigma: f64,
}

impl BoundParams {
    pub fn new(mu: f64, lip: f64, delta0: f64, sigma: f64) -> Result<Self> {
        check_moduli(mu, lip, delta0)?;
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::param("sigma", "certificate scale must be positive"));
        }
        Ok(Self {
            mu,
            lip,
            b: offset_b(mu, lip),
            delta0,
            sigma,
        })
    }

    fn scaled_delta0(&self) -> f64 {
        self.delta0 / (self.sigma * self.sigma)
    }

    fn s2(&self) -> f64 {
        self.sigma * self.sigma
    }

    /// Last-iterate bound on `f − f*` in the original scale.
    pub fn last_iterate(&self, beta: f64, k: u64) -> Result<f64> {
        Ok(self.s2() * last_iterate_bound(self.mu, self.lip, self.scaled_delta0(), beta, k)?)
    }

    /// Envelope on `f − f*` in the original scale; `Δ0` itself at `k = 0`.
    pub fn envelope(&self, beta: f64, k: u64) -> Result<f64> {
        if k == 0 {
            check_beta_envelope(beta)?;
            return Ok(self.delta0);
        }
        Ok(self.s2() * uniform_envelope(self.mu, self.lip, self.scaled_delta0(), beta, k)?)
    }

    /// Precomputed envelope values for `k = 0..=horizon`.
    pub fn envelope_table(&self, beta: f64, horizon: u64) -> Result<Vec<f64>> {
        check_beta_envelope(beta)?;
        let d0 = self.scaled_delta0();
        let s2 = self.s2();
        Ok((0..=horizon)
            .map(|k| {
                if k == 0 {
                    self.delta0
                } else {
                    s2 * envelope_unchecked(self.mu, self.lip, d0, beta, k)
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateValue {
    /// Bound for the rescaled unit-noise problem.
    pub raw: f64,
    /// Bound on `f(x_k) − f*` for the problem as given.
    pub value: f64,
}

/// An evaluated bound curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub params: BoundParams,
    /// β for upper bounds, α for the lower curve.
    pub confidence: f64,
    pub values: BTreeMap<u64, CertificateValue>,
}

impl Certificate {
    pub fn evaluate(
        kind: CertificateKind,
        params: BoundParams,
        confidence: f64,
        ks: impl IntoIterator<Item = u64>,
    ) -> Result<Self> {
        let s2 = params.s2();
        let mut values = BTreeMap::new();
        for k in ks {
            let value = match kind {
                CertificateKind::LastIterate => params.last_iterate(confidence, k)?,
                CertificateKind::UniformEnvelope => params.envelope(confidence, k)?,
                CertificateKind::LowerCurve => {
                    lower_bound_curve(params.mu, params.sigma, confidence, k)?
                }
            };
            values.insert(
                k,
                CertificateValue {
                    raw: value / s2,
                    value,
                },
            );
        }
        Ok(Self {
            kind,
            params,
            confidence,
            values,
        })
    }
}

/// Integer grid `{1, …, 10^decades}` with `per_decade` log-spaced points per
/// decade, deduplicated and sorted, starting at `start`.
pub fn log_grid(start: u64, end: u64, per_decade: u32) -> Vec<u64> {
    let mut out = Vec::new();
    if end < start {
        return out;
    }
    let lo = (start.max(1) as f64).log10();
    let hi = (end as f64).log10();
    let n = ((hi - lo) * per_decade as f64).ceil() as u64;
    for i in 0..=n {
        let k = 10f64
            .powf(lo + (hi - lo) * i as f64 / n.max(1) as f64)
            .round() as u64;
        let k = k.clamp(start, end);
        if out.last() != Some(&k) {
            out.push(k);
        }
    }
    if out.last() != Some(&end) {
        out.push(end);
    }
    out
}
