//! The SGD recursion `x_{k+1} = x_k − η_k g(x_k; ξ_k)` and trajectory recording.

use std::io::Write;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{sample_gradient_into, OracleModel, ProblemSpec};
use crate::rng::{NoiseStream, StreamId};
use crate::schedule::ScheduleSpec;

/// Iterates are stored densely up to this index, then at geometrically
/// spaced checkpoints.
pub const DENSE_ITERATES: u64 = 10_000;
const CHECKPOINT_GROWTH: f64 = 1.02;

/// What an observer sees after each step (and once for `k = 0`).
#[derive(Debug, Clone, Copy)]
pub struct StepView<'a> {
    pub k: u64,
    pub x: &'a [f64],
    pub gap: f64,
    /// `‖x_k − x_{k−1}‖`, absent at `k = 0`.
    pub displacement: Option<f64>,
}

fn check_inputs(spec: &ProblemSpec, oracle: &OracleModel, x0: &[f64]) -> Result<()> {
    if x0.len() != spec.dimension() {
        return Err(Error::DimensionMismatch {
            expected: spec.dimension(),
            got: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("x0", "must be finite"));
    }
    oracle.check_compatible(spec)
}

/// Runs up to `horizon` steps, handing every state to `observer`.
///
/// Returns the index of the last state produced. A non-finite iterate aborts
/// the run with [`Error::NonFinite`].
pub fn drive<F>(
    spec: &ProblemSpec,
    oracle: &OracleModel,
    sched: &ScheduleSpec,
    x0: &[f64],
    horizon: u64,
    stream: StreamId,
    mut observer: F,
) -> Result<u64>
where
    F: FnMut(&StepView<'_>) -> ControlFlow<()>,
{
    check_inputs(spec, oracle, x0)?;
    let d = spec.dimension();
    let mut noise = NoiseStream::new(stream, oracle.normals_per_step(spec));
    let mut scratch = vec![0.0; noise.normals_per_step()];
    let mut x = x0.to_vec();
    let mut g = vec![0.0; d];

    let view = StepView {
        k: 0,
        x: &x,
        gap: spec.gap_unchecked(&x),
        displacement: None,
    };
    if observer(&view).is_break() {
        return Ok(0);
    }
    for k in 0..horizon {
        sample_gradient_into(spec, oracle, &mut noise, &x, k, &mut g, &mut scratch);
        let eta = sched.step_size(k);
        let mut disp2 = 0.0;
        for (xi, gi) in x.iter_mut().zip(&g) {
            let step = eta * gi;
            *xi -= step;
            disp2 += step * step;
        }
        let gap = spec.gap_unchecked(&x);
        if !gap.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k + 1 });
        }
        let view = StepView {
            k: k + 1,
            x: &x,
            gap,
            displacement: Some(disp2.sqrt()),
        };
        if observer(&view).is_break() {
            return Ok(k + 1);
        }
    }
    Ok(horizon)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedProvenance {
    pub master_seed: u64,
    pub trial_index: u64,
}

impl From<StreamId> for SeedProvenance {
    fn from(s: StreamId) -> Self {
        Self {
            master_seed: s.master_seed,
            trial_index: s.trial_index,
        }
    }
}

/// A recorded SGD run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: u64,
    /// `Δ_k` for `k = 0..=steps`.
    pub gap: Vec<f64>,
    /// `‖x_k − x_{k−1}‖` for `k = 1..=steps`, stored at index `k − 1`.
    pub displacement: Vec<f64>,
    /// `(k, x_k)`; dense up to [`DENSE_ITERATES`], sparse afterwards, always
    /// including the final iterate.
    pub iterates: Vec<(u64, Vec<f64>)>,
    pub seed: SeedProvenance,
}

impl Trajectory {
    fn recorder(capacity: u64, seed: SeedProvenance) -> Self {
        let cap = capacity.min(1 << 24) as usize;
        Self {
            steps: 0,
            gap: Vec::with_capacity(cap + 1),
            displacement: Vec::with_capacity(cap),
            iterates: Vec::new(),
            seed,
        }
    }

    fn record(&mut self, v: &StepView<'_>, next_checkpoint: &mut u64) {
        self.steps = v.k;
        self.gap.push(v.gap);
        if let Some(d) = v.displacement {
            self.displacement.push(d);
        }
        if v.k <= DENSE_ITERATES || v.k >= *next_checkpoint {
            self.iterates.push((v.k, v.x.to_vec()));
            if v.k >= DENSE_ITERATES {
                *next_checkpoint = ((v.k as f64 * CHECKPOINT_GROWTH).ceil() as u64).max(v.k + 1);
            }
        }
    }

    fn finish(&mut self, last_x: Option<Vec<f64>>) {
        if let Some(x) = last_x {
            if self.iterates.last().map(|(k, _)| *k) != Some(self.steps) {
                self.iterates.push((self.steps, x));
            }
        }
    }

    /// Iterate at `k` if it was kept.
    pub fn iterate(&self, k: u64) -> Option<&[f64]> {
        self.iterates
            .binary_search_by_key(&k, |(i, _)| *i)
            .ok()
            .map(|i| self.iterates[i].1.as_slice())
    }

    pub fn last_iterate(&self) -> Option<&[f64]> {
        self.iterates.last().map(|(_, x)| x.as_slice())
    }

    /// CSV with columns `k, gap, displacement` (empty displacement at `k = 0`).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "gap", "displacement"])?;
        for (k, g) in self.gap.iter().enumerate() {
            let disp = if k == 0 {
                String::new()
            } else {
                format!("{:e}", self.displacement[k - 1])
            };
            out.write_record([k.to_string(), format!("{g:e}"), disp])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs `horizon` steps of SGD and records the trajectory.
pub fn run(
    spec: &ProblemSpec,
    oracle: &OracleModel,
    sched: &ScheduleSpec,
    x0: &[f64],
    horizon: u64,
    stream: StreamId,
) -> Result<Trajectory> {
    if horizon < 1 {
        return Err(Error::param("horizon", "must be >= 1"));
    }
    let mut traj = Trajectory::recorder(horizon, stream.into());
    let mut next = DENSE_ITERATES;
    let mut last = None;
    drive(spec, oracle, sched, x0, horizon, stream, |v| {
        traj.record(v, &mut next);
        if v.k == horizon {
            last = Some(v.x.to_vec());
        }
        ControlFlow::Continue(())
    })?;
    traj.finish(last);
    Ok(traj)
}

/// Runs until the first `k ≥ 1` with `‖x_k − x_{k−1}‖ ≤ epsilon`.
///
/// Returns `(Some(tau), trajectory up to tau)` or `(None, trajectory up to
/// max_steps)` when the criterion never fires.
pub fn run_until_stopping(
    spec: &ProblemSpec,
    oracle: &OracleModel,
    sched: &ScheduleSpec,
    x0: &[f64],
    epsilon: f64,
    max_steps: u64,
    stream: StreamId,
) -> Result<(Option<u64>, Trajectory)> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::param(
            "epsilon",
            format!("must be finite and >= 0, got {epsilon}"),
        ));
    }
    if max_steps < 1 {
        return Err(Error::param("max_steps", "must be >= 1"));
    }
    let mut traj = Trajectory::recorder(max_steps.min(1 << 16), stream.into());
    let mut next = DENSE_ITERATES;
    let mut tau = None;
    let mut last = None;
    drive(spec, oracle, sched, x0, max_steps, stream, |v| {
        traj.record(v, &mut next);
        let stop = matches!(v.displacement, Some(d) if d <= epsilon);
        if stop || v.k == max_steps {
            last = Some(v.x.to_vec());
        }
        if stop {
            tau = Some(v.k);
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    traj.finish(last);
    Ok((tau, traj))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_square() -> (ProblemSpec, ScheduleSpec) {
        let p = ProblemSpec::diagonal_quadratic(vec![1.0]).unwrap();
        let s = ScheduleSpec::new(p.mu(), p.lip()).unwrap();
        (p, s)
    }

    #[test]
    fn noiseless_one_step_convergence() {
        let (p, s) = half_square();
        let t = run(
            &p,
            &OracleModel::zero(),
            &s,
            &[1.0],
            50,
            StreamId::new(0, 0),
        )
        .unwrap();
        assert_eq!(t.gap.len(), 51);
        assert_eq!(t.gap[0], 0.5);
        assert!(t.gap[1..].iter().all(|&g| g == 0.0));
        assert_eq!(t.iterate(1), Some(&[0.0][..]));
    }

    #[test]
    fn two_dimensional_first_step() {
        let p = ProblemSpec::diagonal_quadratic(vec![1.0, 2.0]).unwrap();
        let s = ScheduleSpec::new(p.mu(), p.lip()).unwrap();
        assert_eq!(s.b(), 8.0);
        let t = run(
            &p,
            &OracleModel::zero(),
            &s,
            &[1.0, 1.0],
            3,
            StreamId::new(0, 0),
        )
        .unwrap();
        assert_eq!(t.iterate(1), Some(&[0.5, 0.0][..]));
        assert_eq!(t.gap[1], 0.125);
    }

    #[test]
    fn seeded_runs_repeat_bitwise() {
        let p = ProblemSpec::diagonal_quadratic(vec![1.0, 4.0]).unwrap();
        let s = ScheduleSpec::new(p.mu(), p.lip()).unwrap();
        let o = OracleModel::isotropic(1.0).unwrap();
        let a = run(&p, &o, &s, &[1.0, -1.0], 200, StreamId::new(9, 2)).unwrap();
        let b = run(&p, &o, &s, &[1.0, -1.0], 200, StreamId::new(9, 2)).unwrap();
        assert_eq!(a, b);
        let c = run(&p, &o, &s, &[1.0, -1.0], 200, StreamId::new(9, 3)).unwrap();
        assert_ne!(a.gap, c.gap);
    }

    #[test]
    fn gap_dominates_distance() {
        let p = ProblemSpec::diagonal_quadratic(vec![0.5, 1.0, 3.0]).unwrap();
        let s = ScheduleSpec::new(p.mu(), p.lip()).unwrap();
        let o = OracleModel::isotropic(2.0).unwrap();
        let t = run(&p, &o, &s, &[3.0, -2.0, 1.0], 500, StreamId::new(1, 1)).unwrap();
        for (k, x) in &t.iterates {
            let d2: f64 = x.iter().map(|v| v * v).sum();
            let g = t.gap[*k as usize];
            assert!(g >= 0.0);
            assert!(g >= 0.5 * p.mu() * d2 * (1.0 - 1e-12));
        }
    }

    #[test]
    fn stopping_examples() {
        let (p, s) = half_square();
        let zero = OracleModel::zero();
        let (tau, t) =
            run_until_stopping(&p, &zero, &s, &[1.0], 0.5, 100, StreamId::new(0, 0)).unwrap();
        assert_eq!(tau, Some(2));
        assert_eq!(t.steps, 2);
        let (tau, _) =
            run_until_stopping(&p, &zero, &s, &[1.0], 1.5, 100, StreamId::new(0, 0)).unwrap();
        assert_eq!(tau, Some(1));

        let noisy = OracleModel::isotropic(1.0).unwrap();
        let (tau, t) =
            run_until_stopping(&p, &noisy, &s, &[1.0], 0.0, 100, StreamId::new(3, 0)).unwrap();
        assert_eq!(tau, None);
        assert_eq!(t.steps, 100);
        assert_eq!(t.displacement.len(), 100);
    }

    #[test]
    fn non_finite_iterate_aborts() {
        // a huge curvature with a schedule built for a tiny one diverges
        let p = ProblemSpec::diagonal_quadratic(vec![1e6]).unwrap();
        let s = ScheduleSpec::new(1e-6, 1e-6).unwrap();
        let r = run(
            &p,
            &OracleModel::zero(),
            &s,
            &[1.0],
            10_000,
            StreamId::new(0, 0),
        );
        assert!(matches!(r, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn sparse_checkpoints_beyond_dense_range() {
        let (p, s) = half_square();
        let t = run(
            &p,
            &OracleModel::zero(),
            &s,
            &[1.0],
            30_000,
            StreamId::new(0, 0),
        )
        .unwrap();
        assert_eq!(t.gap.len(), 30_001);
        assert!(t.iterates.len() < 10_200);
        assert!(t.iterate(10_000).is_some());
        assert_eq!(t.iterates.last().unwrap().0, 30_000);
        assert!(t.iterates.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn csv_has_one_row_per_state() {
        let (p, s) = half_square();
        let t = run(&p, &OracleModel::zero(), &s, &[1.0], 3, StreamId::new(0, 0)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "k,gap,displacement");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "0,5e-1,");
    }

    #[test]
    fn bad_inputs() {
        let (p, s) = half_square();
        let z = OracleModel::zero();
        assert!(run(&p, &z, &s, &[1.0, 2.0], 3, StreamId::new(0, 0)).is_err());
        assert!(run(&p, &z, &s, &[1.0], 0, StreamId::new(0, 0)).is_err());
        assert!(run_until_stopping(&p, &z, &s, &[1.0], -1.0, 3, StreamId::new(0, 0)).is_err());
    }
}
