//! Synthetic strongly convex objectives and their stochastic gradient oracles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::NoiseStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemKind {
    /// `f(x) = ½ Σ λ_i (x_i − c_i)²` with `λ = spectrum`, `c = x_star`.
    DiagonalQuadratic { spectrum: Vec<f64> },
    /// One-dimensional `f(x) = (μ/2)(x − θ)²`.
    TesterLocation { theta: f64 },
}

/// A strongly convex objective with known moduli, minimizer and minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    #[serde(flatten)]
    kind: ProblemKind,
    dimension: usize,
    mu: f64,
    lip: f64,
    x_star: Vec<f64>,
    f_star: f64,
}

fn positive_finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(
            name,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

impl ProblemSpec {
    /// Diagonal quadratic centred at the origin.
    pub fn diagonal_quadratic(spectrum: Vec<f64>) -> Result<Self> {
        let d = spectrum.len();
        Self::diagonal_quadratic_centered(spectrum, vec![0.0; d])
    }

    pub fn diagonal_quadratic_centered(spectrum: Vec<f64>, center: Vec<f64>) -> Result<Self> {
        if spectrum.is_empty() {
            return Err(Error::param("spectrum", "must be nonempty"));
        }
        if center.len() != spectrum.len() {
            return Err(Error::DimensionMismatch {
                expected: spectrum.len(),
                got: center.len(),
            });
        }
        for &l in &spectrum {
            positive_finite("spectrum", l)?;
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("center", "must be finite"));
        }
        let mu = spectrum.iter().copied().fold(f64::INFINITY, f64::min);
        let lip = spectrum.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            dimension: spectrum.len(),
            kind: ProblemKind::DiagonalQuadratic { spectrum },
            mu,
            lip,
            x_star: center,
            f_star: 0.0,
        })
    }

    pub fn tester_location(mu: f64, theta: f64) -> Result<Self> {
        positive_finite("mu", mu)?;
        if !theta.is_finite() {
            return Err(Error::param("theta", "must be finite"));
        }
        Ok(Self {
            kind: ProblemKind::TesterLocation { theta },
            dimension: 1,
            mu,
            lip: mu,
            x_star: vec![theta],
            f_star: 0.0,
        })
    }

    pub fn kind(&self) -> &ProblemKind {
        &self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lip(&self) -> f64 {
        self.lip
    }

    pub fn x_star(&self) -> &[f64] {
        &self.x_star
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    pub fn spectrum(&self) -> Option<&[f64]> {
        match &self.kind {
            ProblemKind::DiagonalQuadratic { spectrum } => Some(spectrum),
            ProblemKind::TesterLocation { .. } => None,
        }
    }

    pub fn theta(&self) -> Option<f64> {
        match self.kind {
            ProblemKind::TesterLocation { theta } => Some(theta),
            ProblemKind::DiagonalQuadratic { .. } => None,
        }
    }

    #[inline]
    fn curvature(&self, i: usize) -> f64 {
        match &self.kind {
            ProblemKind::DiagonalQuadratic { spectrum } => spectrum[i],
            ProblemKind::TesterLocation { .. } => self.mu,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.dimension {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: x.len(),
            })
        }
    }

    pub fn eval_objective(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.f_star + self.gap_unchecked(x))
    }

    pub fn eval_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut g = vec![0.0; self.dimension];
        self.gradient_into(x, &mut g);
        Ok(g)
    }

    /// Suboptimality `f(x) − f*`, evaluated without cancellation.
    pub fn gap(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.gap_unchecked(x))
    }

    pub(crate) fn gap_unchecked(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.x_star)
            .enumerate()
            .map(|(i, (xi, ci))| {
                let r = xi - ci;
                0.5 * self.curvature(i) * r * r
            })
            .sum()
    }

    pub(crate) fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.curvature(i) * (x[i] - self.x_star[i]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    Zero,
    IsotropicGaussian,
    TesterSample,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(NoiseKind::Zero),
            "isotropic-gaussian" | "gaussian" => Ok(NoiseKind::IsotropicGaussian),
            "tester-sample" => Ok(NoiseKind::TesterSample),
            other => Err(Error::param(
                "noise",
                format!("unknown noise kind `{other}`"),
            )),
        }
    }
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseKind::Zero => "zero",
            NoiseKind::IsotropicGaussian => "isotropic-gaussian",
            NoiseKind::TesterSample => "tester-sample",
        })
    }
}

/// Stochastic gradient model. `sigma` is the declared sub-Gaussian scale;
/// for `Zero` it only sets the reference bound used by diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleModel {
    pub noise: NoiseKind,
    pub sigma: f64,
}

impl OracleModel {
    pub fn new(noise: NoiseKind, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::param(
                "sigma",
                format!("must be finite and >= 0, got {sigma}"),
            ));
        }
        if noise != NoiseKind::Zero && sigma == 0.0 {
            return Err(Error::param("sigma", "noisy oracle needs sigma > 0"));
        }
        Ok(Self { noise, sigma })
    }

    pub fn zero() -> Self {
        Self {
            noise: NoiseKind::Zero,
            sigma: 1.0,
        }
    }

    pub fn isotropic(sigma: f64) -> Result<Self> {
        Self::new(NoiseKind::IsotropicGaussian, sigma)
    }

    pub fn tester_sample(sigma: f64) -> Result<Self> {
        Self::new(NoiseKind::TesterSample, sigma)
    }

    /// Scale used to translate unit-noise certificates back to this oracle.
    /// The zero oracle is certified as if its scale were `sigma`.
    pub fn certificate_sigma(&self) -> f64 {
        self.sigma
    }

    pub fn normals_per_step(&self, spec: &ProblemSpec) -> usize {
        match self.noise {
            NoiseKind::Zero => 0,
            NoiseKind::IsotropicGaussian => spec.dimension(),
            NoiseKind::TesterSample => 1,
        }
    }

    pub fn check_compatible(&self, spec: &ProblemSpec) -> Result<()> {
        if self.noise == NoiseKind::TesterSample && spec.theta().is_none() {
            return Err(Error::param(
                "noise",
                "tester-sample noise requires a tester-location problem",
            ));
        }
        Ok(())
    }

    /// Writes the additive noise for `step` into `out` (zeros for `Zero`).
    pub(crate) fn noise_into(
        &self,
        spec: &ProblemSpec,
        stream: &mut NoiseStream,
        step: u64,
        out: &mut [f64],
    ) {
        match self.noise {
            NoiseKind::Zero => out.fill(0.0),
            NoiseKind::IsotropicGaussian => {
                stream.normals(step, out);
                // per-coordinate variance σ²/d keeps the squared-norm MGF under
                // (1 − 2tσ²)^(−1/2) for every dimension
                let scale = self.sigma / (spec.dimension() as f64).sqrt();
                out.iter_mut().for_each(|z| *z *= scale);
            }
            NoiseKind::TesterSample => {
                // g = μx − X with X ~ N(μθ, σ²), i.e. ∇f(x) − σZ
                stream.normals(step, out);
                out[0] *= -self.sigma;
            }
        }
    }
}

/// One stochastic gradient `∇f(x) + noise` for step `step_index`.
pub fn sample_gradient(
    spec: &ProblemSpec,
    oracle: &OracleModel,
    stream: &mut NoiseStream,
    x: &[f64],
    step_index: u64,
) -> Result<Vec<f64>> {
    spec.check_dim(x)?;
    oracle.check_compatible(spec)?;
    let mut g = vec![0.0; spec.dimension()];
    let mut noise = vec![0.0; oracle.normals_per_step(spec)];
    sample_gradient_into(spec, oracle, stream, x, step_index, &mut g, &mut noise);
    Ok(g)
}

pub(crate) fn sample_gradient_into(
    spec: &ProblemSpec,
    oracle: &OracleModel,
    stream: &mut NoiseStream,
    x: &[f64],
    step_index: u64,
    g: &mut [f64],
    scratch: &mut [f64],
) {
    spec.gradient_into(x, g);
    if oracle.noise == NoiseKind::Zero {
        return;
    }
    oracle.noise_into(spec, stream, step_index, scratch);
    for (gi, ni) in g.iter_mut().zip(scratch.iter()) {
        *gi += ni;
    }
}

/// Monte Carlo check of the sub-Gaussian noise conditions at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub t: f64,
    pub trials: u64,
    pub empirical_mgf_sqnorm: f64,
    pub se_sqnorm: f64,
    pub bound_sqnorm: f64,
    pub empirical_mgf_directional: f64,
    pub se_directional: f64,
    pub bound_directional: f64,
}

impl DiagnosticReport {
    /// Both empirical MGFs below their bounds plus `n_se` standard errors.
    pub fn dominated(&self, n_se: f64) -> bool {
        self.empirical_mgf_sqnorm <= self.bound_sqnorm + n_se * self.se_sqnorm
            && self.empirical_mgf_directional <= self.bound_directional + n_se * self.se_directional
    }
}

pub const MIN_DIAGNOSTIC_TRIALS: u64 = 10_000;

/// Estimates `E exp(t‖ξ‖²)` and `E exp(⟨φ, ξ⟩)` for the oracle noise `ξ` at
/// `x`, with `φ = t·(1,…,1)/√d`, against `(1 − 2tσ²)^(−1/2)` and
/// `exp(‖φ‖²σ²/2)`.
pub fn subgaussian_diagnostic(
    oracle: &OracleModel,
    spec: &ProblemSpec,
    x: &[f64],
    t: f64,
    trials: u64,
    stream: &mut NoiseStream,
) -> Result<DiagnosticReport> {
    spec.check_dim(x)?;
    oracle.check_compatible(spec)?;
    let s2 = oracle.sigma * oracle.sigma;
    let scaled = if s2 > 0.0 { t * s2 } else { t };
    if !(t.is_finite() && scaled > 0.0 && scaled < 0.5) {
        return Err(Error::param(
            "t",
            format!("need 0 < t·σ² < 1/2, got t={t}, σ²={s2}"),
        ));
    }
    if trials < MIN_DIAGNOSTIC_TRIALS {
        return Err(Error::param(
            "trials",
            format!("need >= {MIN_DIAGNOSTIC_TRIALS}"),
        ));
    }
    let d = spec.dimension();
    let phi = t / (d as f64).sqrt();
    let mut grad = vec![0.0; d];
    spec.gradient_into(x, &mut grad);
    let mut g = vec![0.0; d];
    let mut scratch = vec![0.0; oracle.normals_per_step(spec)];

    let (mut sq_sum, mut sq_sum2, mut dir_sum, mut dir_sum2) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..trials {
        sample_gradient_into(spec, oracle, stream, x, i, &mut g, &mut scratch);
        let (mut norm2, mut dot) = (0.0, 0.0);
        for (gi, fi) in g.iter().zip(&grad) {
            let xi = gi - fi;
            norm2 += xi * xi;
            dot += phi * xi;
        }
        let a = (t * norm2).exp();
        let b = dot.exp();
        sq_sum += a;
        sq_sum2 += a * a;
        dir_sum += b;
        dir_sum2 += b * b;
    }
    let n = trials as f64;
    let se = |s: f64, s2: f64| {
        let m = s / n;
        ((s2 / n - m * m).max(0.0) / n).sqrt()
    };
    let sigma_ref2 = if s2 > 0.0 { s2 } else { 1.0 };
    Ok(DiagnosticReport {
        t,
        trials,
        empirical_mgf_sqnorm: sq_sum / n,
        se_sqnorm: se(sq_sum, sq_sum2),
        bound_sqnorm: (1.0 - 2.0 * t * sigma_ref2).powf(-0.5),
        empirical_mgf_directional: dir_sum / n,
        se_directional: se(dir_sum, dir_sum2),
        bound_directional: (t * t * sigma_ref2 / 2.0).exp(),
    })
}
