//! Violation-rate estimation for the certificates over many independent
//! trajectories, plus sup-statistics and empirical rate fits.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificates::{log_grid, BoundParams};
use crate::engine::drive;
use crate::error::{Error, Result};
use crate::problems::{OracleModel, ProblemSpec};
use crate::rng::StreamId;
use crate::schedule::ScheduleSpec;

pub const MIN_TRIALS: u64 = 100;
/// PASS thresholds allow this many binomial standard errors above nominal.
pub const SE_SLACK: f64 = 3.0;
pub const DEFAULT_PROBES: [u64; 4] = [10, 100, 1_000, 10_000];

/// Everything needed to run one trajectory, shared read-only across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub spec: ProblemSpec,
    pub oracle: OracleModel,
    pub schedule: ScheduleSpec,
    pub x0: Vec<f64>,
    /// Upper bound on `Δ0` to certify with instead of the exact value.
    pub delta0_override: Option<f64>,
}

impl Scenario {
    /// Scenario using the schedule derived from the problem's own `μ, L`.
    pub fn new(spec: ProblemSpec, oracle: OracleModel, x0: Vec<f64>) -> Result<Self> {
        let schedule = ScheduleSpec::new(spec.mu(), spec.lip())?;
        oracle.check_compatible(&spec)?;
        if x0.len() != spec.dimension() {
            return Err(Error::DimensionMismatch {
                expected: spec.dimension(),
                got: x0.len(),
            });
        }
        Ok(Self {
            spec,
            oracle,
            schedule,
            x0,
            delta0_override: None,
        })
    }

    pub fn delta0(&self) -> Result<f64> {
        let exact = self.spec.gap(&self.x0)?;
        match self.delta0_override {
            Some(d) if d >= exact => Ok(d),
            Some(d) => Err(Error::param(
                "delta0",
                format!("override {d} is below the exact initial gap {exact}"),
            )),
            None => Ok(exact),
        }
    }

    pub fn bound_params(&self) -> Result<BoundParams> {
        let sigma = match self.oracle.certificate_sigma() {
            s if s > 0.0 => s,
            _ => 1.0,
        };
        BoundParams::new(self.spec.mu(), self.spec.lip(), self.delta0()?, sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SummaryKind {
    Uniform,
    LastIterate,
}

/// Empirical gap quantiles across trials at one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapQuantiles {
    pub k: u64,
    pub q50: f64,
    pub q90: f64,
    pub q99: f64,
    pub max: f64,
}

/// One PASS/FAIL line for a violation rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: String,
    pub violations: u64,
    pub trials: u64,
    pub rate: f64,
    pub se: f64,
    pub nominal: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Verdict {
    fn new(criterion: String, violations: u64, trials: u64, nominal: f64) -> Self {
        let (rate, se) = rate_and_se(violations, trials);
        let threshold = nominal + SE_SLACK * se;
        Self {
            criterion,
            violations,
            trials,
            rate,
            se,
            nominal,
            threshold,
            pass: rate <= threshold,
        }
    }
}

/// Point estimate and binomial standard error `sqrt(p̂(1−p̂)/M)`.
pub fn rate_and_se(count: u64, trials: u64) -> (f64, f64) {
    let p = count as f64 / trials as f64;
    (p, (p * (1.0 - p) / trials as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub kind: SummaryKind,
    pub trials: u64,
    pub horizon: u64,
    pub beta: f64,
    /// Trajectories with some `k ≤ K` above the envelope.
    pub violations_uniform: Option<u64>,
    /// Per probe `k`, trajectories with `Δ_k` above the last-iterate bound.
    pub violations_last: BTreeMap<u64, u64>,
    /// Aborted trajectories; already counted as violations.
    pub aborted: u64,
    /// Per trial `sup_{3≤k≤K} Δ_k (k+B−1) / ln ln k`; `None` if aborted or `K < 3`.
    pub sup_stats: Vec<Option<f64>>,
    pub quantiles: Vec<GapQuantiles>,
}

impl TrialSummary {
    pub fn verdicts(&self) -> Vec<Verdict> {
        let mut out = Vec::new();
        if let Some(v) = self.violations_uniform {
            out.push(Verdict::new(
                format!("uniform envelope, k in [1, {}]", self.horizon),
                v,
                self.trials,
                PI * PI * self.beta / 6.0,
            ));
        }
        for (k, v) in &self.violations_last {
            out.push(Verdict::new(
                format!("last-iterate bound at k = {k}"),
                *v,
                self.trials,
                self.beta,
            ));
        }
        out
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts().iter().all(|v| v.pass)
    }
}

struct TrialOutcome {
    aborted: bool,
    uniform_violation: bool,
    last_violations: Vec<bool>,
    sup_stat: Option<f64>,
    grid_gaps: Vec<f64>,
}

fn check_trials(trials: u64) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(Error::param(
            "trials",
            format!("need >= {MIN_TRIALS}, got {trials}"),
        ));
    }
    Ok(())
}

/// Runs `job(trial_index)` for every trial, in parallel, returning results in
/// trial order. `workers = None` uses the global pool.
pub(crate) fn run_indexed<T, F>(trials: u64, workers: Option<usize>, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    let go = || (0..trials).into_par_iter().map(&job).collect::<Vec<T>>();
    match workers {
        None => Ok(go()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::param("workers", e.to_string()))?;
            Ok(pool.install(go))
        }
    }
}

fn sup_term(gap: f64, k: u64, b: f64) -> f64 {
    let kf = k as f64;
    gap * (kf + b - 1.0) / kf.ln().ln()
}

struct TrialPlan<'a> {
    horizon: u64,
    envelope: Option<&'a [f64]>,
    probes: &'a [u64],
    probe_bounds: &'a [f64],
    grid: &'a [u64],
}

fn one_trial(scn: &Scenario, plan: &TrialPlan<'_>, stream: StreamId) -> TrialOutcome {
    let b = scn.schedule.b();
    let mut uniform_violation = false;
    let mut last_violations = vec![false; plan.probes.len()];
    let mut sup: Option<f64> = None;
    let mut grid_gaps = Vec::with_capacity(plan.grid.len());
    let mut gi = 0;
    let mut pi = 0;
    let res = drive(
        &scn.spec,
        &scn.oracle,
        &scn.schedule,
        &scn.x0,
        plan.horizon,
        stream,
        |v| {
            let k = v.k;
            if let Some(env) = plan.envelope {
                if k >= 1 && v.gap > env[k as usize] {
                    uniform_violation = true;
                }
            }
            if pi < plan.probes.len() && plan.probes[pi] == k {
                last_violations[pi] = v.gap > plan.probe_bounds[pi];
                pi += 1;
            }
            if k >= 3 {
                let s = sup_term(v.gap, k, b);
                sup = Some(sup.map_or(s, |m: f64| m.max(s)));
            }
            if gi < plan.grid.len() && plan.grid[gi] == k {
                grid_gaps.push(v.gap);
                gi += 1;
            }
            ControlFlow::Continue(())
        },
    );
    match res {
        Ok(_) => TrialOutcome {
            aborted: false,
            uniform_violation,
            last_violations,
            sup_stat: sup,
            grid_gaps,
        },
        Err(_) => TrialOutcome {
            aborted: true,
            uniform_violation: true,
            last_violations: vec![true; plan.probes.len()],
            sup_stat: None,
            grid_gaps: vec![f64::INFINITY; plan.grid.len()],
        },
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    // nearest-rank
    let n = sorted.len();
    let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}

fn aggregate(
    kind: SummaryKind,
    trials: u64,
    horizon: u64,
    beta: f64,
    probes: &[u64],
    grid: &[u64],
    outcomes: Vec<TrialOutcome>,
) -> TrialSummary {
    let aborted = outcomes.iter().filter(|o| o.aborted).count() as u64;
    let violations_uniform = (kind == SummaryKind::Uniform)
        .then(|| outcomes.iter().filter(|o| o.uniform_violation).count() as u64);
    let violations_last = probes
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            (
                k,
                outcomes.iter().filter(|o| o.last_violations[i]).count() as u64,
            )
        })
        .collect();
    let quantiles = grid
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let mut col: Vec<f64> = outcomes.iter().map(|o| o.grid_gaps[i]).collect();
            col.sort_by(f64::total_cmp);
            GapQuantiles {
                k,
                q50: quantile(&col, 0.5),
                q90: quantile(&col, 0.9),
                q99: quantile(&col, 0.99),
                max: *col.last().unwrap(),
            }
        })
        .collect();
    TrialSummary {
        kind,
        trials,
        horizon,
        beta,
        violations_uniform,
        violations_last,
        aborted,
        sup_stats: outcomes.iter().map(|o| o.sup_stat).collect(),
        quantiles,
    }
}

/// Fraction of trajectories that leave the uniform envelope anywhere in `[1, K]`.
pub fn estimate_uniform_violation(
    scn: &Scenario,
    beta: f64,
    horizon: u64,
    trials: u64,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<TrialSummary> {
    check_trials(trials)?;
    if horizon < 1 {
        return Err(Error::param("horizon", "must be >= 1"));
    }
    let params = scn.bound_params()?;
    let envelope = params.envelope_table(beta, horizon)?;
    let grid = log_grid(1, horizon, 10);
    let plan = TrialPlan {
        horizon,
        envelope: Some(&envelope),
        probes: &[],
        probe_bounds: &[],
        grid: &grid,
    };
    let outcomes = run_indexed(trials, workers, |i| {
        one_trial(scn, &plan, StreamId::new(master_seed, i))
    })?;
    Ok(aggregate(
        SummaryKind::Uniform,
        trials,
        horizon,
        beta,
        &[],
        &grid,
        outcomes,
    ))
}

/// Per-probe fraction of trajectories above the last-iterate bound.
pub fn estimate_last_iterate_violation(
    scn: &Scenario,
    beta: f64,
    probes: &[u64],
    trials: u64,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<TrialSummary> {
    check_trials(trials)?;
    if probes.is_empty() {
        return Err(Error::param("probes", "must be nonempty"));
    }
    let mut probes = probes.to_vec();
    probes.sort_unstable();
    probes.dedup();
    let params = scn.bound_params()?;
    let bounds = probes
        .iter()
        .map(|&k| params.last_iterate(beta, k))
        .collect::<Result<Vec<_>>>()?;
    let horizon = *probes.last().unwrap();
    let grid = log_grid(1, horizon.max(1), 10);
    let plan = TrialPlan {
        horizon,
        envelope: None,
        probes: &probes,
        probe_bounds: &bounds,
        grid: &grid,
    };
    let outcomes = run_indexed(trials, workers, |i| {
        one_trial(scn, &plan, StreamId::new(master_seed, i))
    })?;
    Ok(aggregate(
        SummaryKind::LastIterate,
        trials,
        horizon,
        beta,
        &probes,
        &grid,
        outcomes,
    ))
}

/// `true` if any `Δ_k`, `k ≥ 1`, exceeds `bound(k)`.
pub fn violates(gaps: &[f64], bound: impl Fn(u64) -> f64) -> bool {
    gaps.iter()
        .enumerate()
        .skip(1)
        .any(|(k, &g)| g > bound(k as u64))
}

/// Running `sup_{3≤k≤K'} Δ_k (k+B−1)/ln(ln k)` at log-spaced `K'`.
pub fn sup_statistic_profile(gaps: &[f64], b: f64) -> Result<Vec<(u64, f64)>> {
    if gaps.len() < 4 {
        return Err(Error::param("horizon", "sup-statistic needs horizon >= 3"));
    }
    let horizon = (gaps.len() - 1) as u64;
    let grid = log_grid(3, horizon, 10);
    let mut out = Vec::with_capacity(grid.len());
    let mut sup = f64::NEG_INFINITY;
    let mut gi = 0;
    for (k, &g) in gaps.iter().enumerate().skip(3) {
        sup = sup.max(sup_term(g, k as u64, b));
        if gi < grid.len() && grid[gi] == k as u64 {
            out.push((k as u64, sup));
            gi += 1;
        }
    }
    Ok(out)
}

/// Least-squares fit `ln Δ_k ≈ log_c + slope · ln k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub log_c: f64,
    pub slope: f64,
    pub residual_norm: f64,
    pub points: usize,
}

pub const MIN_FIT_POINTS: usize = 10;

pub fn fit_rate(gaps: &[f64], k_min: u64) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = gaps
        .iter()
        .enumerate()
        .skip(k_min.max(1) as usize)
        .filter(|(_, &g)| g > 0.0 && g.is_finite())
        .map(|(k, &g)| ((k as f64).ln(), g.ln()))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::Degenerate(format!(
            "{} usable points, need {MIN_FIT_POINTS}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let log_c = my - slope * mx;
    let residual_norm = pts
        .iter()
        .map(|p| (p.1 - log_c - slope * p.0).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(RateFit {
        log_c,
        slope,
        residual_norm,
        points: pts.len(),
    })
}
