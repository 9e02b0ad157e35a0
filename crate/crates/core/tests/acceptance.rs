//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

// `ensure!` negates its condition so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use unisgd::certificates::{
    coverage_of_beta, last_iterate_bound, log_grid, lower_bound_curve, uniform_envelope,
};
use unisgd::engine::run;
use unisgd::montecarlo::{estimate_last_iterate_violation, estimate_uniform_violation, Scenario};
use unisgd::problems::{sample_gradient, subgaussian_diagnostic, OracleModel, ProblemSpec};
use unisgd::rng::{NoiseStream, StreamId};
use unisgd::schedule::ScheduleSpec;
use unisgd::tester::{
    encode_theta, kl_between, project_to_v, run_test_experiment, BitSequence, TesterConfig,
    DEFAULT_CAP,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn bits_of(index: u64, depth: usize) -> BitSequence {
    BitSequence::new(
        (0..depth)
            .map(|i| ((index >> (depth - 1 - i)) & 1) as u8)
            .collect(),
    )
    .unwrap()
}

fn naive_theta(bits: &[u8]) -> f64 {
    bits.iter()
        .enumerate()
        .map(|(i, &b)| 2.0 * b as f64 / 3f64.powi(i as i32 + 1))
        .sum()
}

fn unit_quadratic(noise: OracleModel) -> Scenario {
    let spec = ProblemSpec::diagonal_quadratic(vec![1.0]).unwrap();
    Scenario::new(spec, noise, vec![2f64.sqrt()]).unwrap()
}

fn c1_algebra() -> Outcome {
    let mut worst_prod = 0.0f64;
    for lip in [1.0, 2.0, 10.0] {
        let s = ok(ScheduleSpec::new(1.0, lip))?;
        let b = 4.0 * lip;
        ensure!(s.b() == b, "B = {} for L = {lip}", s.b());
        let mut prod = 1.0;
        for k in 0..=100_000u64 {
            prod *= 1.0 - 2.0 / (k as f64 + b);
            let e = rel_err(s.contraction_product(k), prod);
            worst_prod = worst_prod.max(e);
            ensure!(
                e <= 1e-12,
                "B={b} k={k}: closed form vs product rel err {e:e}"
            );
        }
    }

    let mut worst_margin = 0.0f64;
    for (mu, lip) in [(1.0, 1.0), (1.0, 2.0), (1.0, 10.0), (2.5, 4.0), (0.1, 7.0)] {
        let s = ok(ScheduleSpec::new(mu, lip))?;
        for k in 0..=1_000_000u64 {
            let m = s.mgf_condition_margin(k);
            let scale = s.mgf_parameter(k + 1).max(1.0);
            let e = (m + mu / 8.0).abs() / scale;
            worst_margin = worst_margin.max(e);
            ensure!(
                m < 0.0 && e <= 1e-12,
                "mu={mu} L={lip} k={k}: margin {m} != -mu/8"
            );
        }
    }

    let mut max_tail = 0.0f64;
    for lip in [1.0, 2.0, 10.0] {
        let s = ok(ScheduleSpec::new(1.0, lip))?;
        let b = s.b();
        for k in 0..=10_000u64 {
            let t_next = (k as f64 + b) / 16.0;
            // P = prod_{i=j+1}^{k} (1 - 2/(i+B)), built from j = k downwards
            let mut p = 1.0;
            for j in (0..=k).rev() {
                let w = t_next * 4.0 / (j as f64 + b) * p;
                max_tail = max_tail.max(w);
                ensure!(w <= 0.25 * (1.0 + 1e-12), "B={b} j={j} k={k}: tail {w}");
                p *= 1.0 - 2.0 / (j as f64 + b);
            }
            if k % 97 == 0 {
                for j in [0, k / 3, k] {
                    let e = rel_err(
                        s.weighted_tail(j, k),
                        t_next * 4.0 / (j as f64 + b) * s.tail_product(j, k),
                    );
                    ensure!(e <= 1e-12, "weighted_tail({j},{k}) disagrees: {e:e}");
                }
                let ns = s.noise_sum(k);
                ensure!(ns <= lip * (1.0 + 1e-12), "noise sum {ns} > L/mu at k={k}");
            }
        }
    }
    Ok(format!(
        "product rel err {worst_prod:.1e}, margin err {worst_margin:.1e}, max weighted tail {max_tail:.6}"
    ))
}

fn c2_noiseless() -> Outcome {
    let zero = OracleModel::zero();
    let spec = ok(ProblemSpec::diagonal_quadratic(vec![1.0]))?;
    let sched = ok(ScheduleSpec::new(1.0, 1.0))?;
    ensure!(sched.b() == 4.0, "B = {}", sched.b());
    let t = ok(run(&spec, &zero, &sched, &[1.0], 1000, StreamId::new(0, 0)))?;
    ensure!(t.gap[0] == 0.5, "gap[0] = {}", t.gap[0]);
    ensure!(
        t.gap[1..].iter().all(|&g| g == 0.0),
        "nonzero gap after step 1"
    );

    // spectrum (1, 2): B = 8, eta_k = 4/(k+8); coordinate 2 dies at k = 1,
    // coordinate 1 is prod_{j<k} (j+4)/(j+8)
    let spec = ok(ProblemSpec::diagonal_quadratic(vec![1.0, 2.0]))?;
    let sched = ok(ScheduleSpec::new(1.0, 2.0))?;
    let t = ok(run(
        &spec,
        &zero,
        &sched,
        &[1.0, 1.0],
        5,
        StreamId::new(0, 0),
    ))?;
    let mut worst = 0.0f64;
    for k in 0..=5u64 {
        let (num, den) = (0..k).fold((1u64, 1u64), |(n, d), j| (n * (j + 4), d * (j + 8)));
        let x1 = num as f64 / den as f64;
        let x2 = if k == 0 { 1.0 } else { 0.0 };
        let want = 0.5 * x1 * x1 + x2 * x2;
        let e = (t.gap[k as usize] - want).abs();
        worst = worst.max(e);
        ensure!(
            e <= 1e-14,
            "k={k}: gap {} vs hand-unrolled {want}",
            t.gap[k as usize]
        );
    }
    ensure!(t.gap[1] == 0.125, "gap[1] = {}", t.gap[1]);
    Ok(format!(
        "scalar gaps exactly 0 for k in [1, 1000]; 2-d max abs err {worst:.1e}"
    ))
}

fn c3_last_iterate() -> Outcome {
    let scn = unit_quadratic(ok(OracleModel::isotropic(1.0))?);
    let d0 = ok(scn.delta0())?;
    ensure!((d0 - 1.0).abs() < 1e-15, "delta0 = {d0}");
    let sum = ok(estimate_last_iterate_violation(
        &scn,
        0.1,
        &[10, 100, 1000],
        2000,
        20_241,
        None,
    ))?;
    let mut parts = Vec::new();
    for v in sum.verdicts() {
        let se = (v.rate * (1.0 - v.rate) / 2000.0).sqrt();
        ensure!(v.trials == 2000, "trials {}", v.trials);
        ensure!(
            v.rate <= 0.1 + 3.0 * se,
            "{}: rate {} > {}",
            v.criterion,
            v.rate,
            0.1 + 3.0 * se
        );
        parts.push(format!("{}/{}", v.violations, v.trials));
    }
    ensure!(parts.len() == 3, "expected 3 probes");
    Ok(format!("violations at k=10,100,1000: {}", parts.join(", ")))
}

fn c4_uniform() -> Outcome {
    let scn = unit_quadratic(ok(OracleModel::isotropic(1.0))?);
    let sum = ok(estimate_uniform_violation(
        &scn, 0.05, 10_000, 2000, 20_242, None,
    ))?;
    let v = sum.violations_uniform.ok_or("no uniform count")?;
    let rate = v as f64 / 2000.0;
    let se = (rate * (1.0 - rate) / 2000.0).sqrt();
    let nominal = std::f64::consts::PI.powi(2) * 0.05 / 6.0;
    ensure!((nominal - 0.0822).abs() < 1e-4, "nominal {nominal}");
    ensure!(
        rate <= nominal + 3.0 * se,
        "rate {rate} > {}",
        nominal + 3.0 * se
    );
    ensure!(sum.all_pass(), "library verdict disagrees");
    Ok(format!(
        "{v}/2000 trajectories left the envelope (limit {nominal:.4} + 3 se)"
    ))
}

/// `E exp(a Y²)` for `Y ~ N(m, s²)`.
fn gaussian_sq_mgf(a: f64, m: f64, s: f64) -> f64 {
    let q = 1.0 - 2.0 * a * s * s;
    q.powf(-0.5) * (a * m * m / q).exp()
}

fn c5_conditional_mgf() -> Outcome {
    let (mu, lip) = (1.0, 1.0);
    let spec = ok(ProblemSpec::diagonal_quadratic(vec![mu]))?;
    let oracle = ok(OracleModel::isotropic(1.0))?;
    let sched = ok(ScheduleSpec::new(mu, lip))?;
    let n = 100_000u64;
    let states = [(0u64, 1.0), (2, 0.3), (10, 0.1), (50, 0.01), (200, 1e-3)];
    let mut lines = Vec::new();
    for (idx, &(k, gap)) in states.iter().enumerate() {
        let x = (2.0 * gap / mu).sqrt();
        let eta = sched.step_size(k);
        let t_k = sched.mgf_parameter(k);
        let t_next = sched.mgf_parameter(k + 1);
        ensure!(t_next == mu * (k as f64 + 4.0) / 16.0, "t_(k+1) mismatch");
        let mut stream = NoiseStream::new(StreamId::new(77, idx as u64), 1);
        let (mut s1, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let g = ok(sample_gradient(&spec, &oracle, &mut stream, &[x], i))?;
            let x1 = x - eta * g[0];
            let v = (t_next * 0.5 * mu * x1 * x1).exp();
            s1 += v;
            s2 += v * v;
        }
        let mean = s1 / n as f64;
        let se = ((s2 / n as f64 - mean * mean).max(0.0) / n as f64).sqrt();
        let rhs3 = ((1.0 - mu * eta / 2.0) * t_next * gap + t_next * lip * eta * eta).exp();
        let rhs4 = (t_k * gap + t_next * lip * eta * eta).exp();
        ensure!(
            mean <= rhs3 + 3.0 * se,
            "state {idx}: one-step MGF {mean} > {rhs3} + 3se"
        );
        ensure!(
            mean <= rhs4 + 3.0 * se,
            "state {idx}: one-step MGF {mean} > {rhs4} + 3se"
        );
        // exact value: x1 ~ N((1 - mu eta) x, eta^2)
        let exact = gaussian_sq_mgf(t_next * mu / 2.0, (1.0 - mu * eta) * x, eta);
        ensure!(
            (mean - exact).abs() <= 5.0 * se,
            "state {idx}: MGF {mean} vs exact {exact}"
        );
        lines.push(format!("{mean:.4}<={:.4}", rhs3.min(rhs4)));
    }
    Ok(format!("gap 1..1e-3: {}", lines.join(" ")))
}

fn c6_diagnostics() -> Outcome {
    let oracle = ok(OracleModel::isotropic(1.0))?;
    let one = ok(ProblemSpec::diagonal_quadratic(vec![1.0]))?;
    let mut st = NoiseStream::new(StreamId::new(5, 0), 1);
    let r1 = ok(subgaussian_diagnostic(
        &oracle,
        &one,
        &[0.3],
        0.25,
        100_000,
        &mut st,
    ))?;
    let sqrt2 = 2f64.sqrt();
    let dev = (r1.empirical_mgf_sqnorm - sqrt2).abs() / sqrt2;
    ensure!(
        dev <= 0.05,
        "d=1 MGF {} not within 5% of sqrt 2",
        r1.empirical_mgf_sqnorm
    );
    ensure!(
        (r1.bound_sqnorm - sqrt2).abs() < 1e-12,
        "d=1 bound {}",
        r1.bound_sqnorm
    );
    ensure!(r1.dominated(3.0), "d=1 report not dominated: {r1:?}");

    let four = ok(ProblemSpec::diagonal_quadratic(vec![1.0, 2.0, 3.0, 4.0]))?;
    let mut st = NoiseStream::new(StreamId::new(5, 1), 4);
    let r4 = ok(subgaussian_diagnostic(
        &oracle, &four, &[1.0; 4], 0.25, 100_000, &mut st,
    ))?;
    ensure!(
        r4.empirical_mgf_sqnorm + 3.0 * r4.se_sqnorm < sqrt2,
        "d=4 MGF {} not below d=1 bound",
        r4.empirical_mgf_sqnorm
    );
    ensure!(r4.dominated(3.0), "d=4 report not dominated: {r4:?}");
    Ok(format!(
        "d=1 {:.4} ({:.2}% from sqrt 2), d=4 {:.4}",
        r1.empirical_mgf_sqnorm,
        100.0 * dev,
        r4.empirical_mgf_sqnorm
    ))
}

fn c7_tester_codes() -> Outcome {
    let mut codewords = 0;
    for depth in 1..=12usize {
        for idx in 0..(1u64 << depth) {
            let v = bits_of(idx, depth);
            let theta = encode_theta(&v);
            ensure!(
                (theta - naive_theta(v.bits())).abs() < 1e-15,
                "theta({v}) off"
            );
            let back = ok(project_to_v(theta, depth))?;
            ensure!(back == v, "round trip {v} -> {back}");
            codewords += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let tables: Vec<Vec<f64>> = (1..=12usize)
        .map(|d| {
            (0..(1u64 << d))
                .map(|i| naive_theta(bits_of(i, d).bits()))
                .collect()
        })
        .collect();
    for _ in 0..10_000 {
        let depth = rng.gen_range(1..=12usize);
        let theta: f64 = rng.gen_range(-0.25..1.25);
        let table = &tables[depth - 1];
        let mut best = 0;
        for (i, &c) in table.iter().enumerate() {
            if (theta - c).abs() < (theta - table[best]).abs() {
                best = i;
            }
        }
        let got = ok(project_to_v(theta, depth))?;
        ensure!(
            got == bits_of(best as u64, depth),
            "theta={theta} depth={depth}: {got}"
        );
    }

    let mut pairs = 0u64;
    for (mu, sigma) in [(1.0, 1.0), (2.0, 0.5)] {
        for depth in 1..=8usize {
            let words: Vec<BitSequence> = (0..(1u64 << depth)).map(|i| bits_of(i, depth)).collect();
            for v in &words {
                for w in &words {
                    let shared = v
                        .bits()
                        .iter()
                        .zip(w.bits())
                        .take_while(|(a, b)| a == b)
                        .count();
                    let kl = ok(kl_between(v, w, mu, sigma))?;
                    let cap = 9f64.powi(-(shared as i32)) * mu * mu / (2.0 * sigma * sigma);
                    ensure!(
                        kl >= 0.0 && kl <= cap * (1.0 + 1e-12),
                        "KL({v}, {w}) = {kl} > {cap}"
                    );
                    if shared < depth {
                        let gap = (encode_theta(v) - encode_theta(w)).abs();
                        let sep = 3f64.powi(-(shared as i32 + 1));
                        ensure!(gap >= sep * (1.0 - 1e-12), "{v} and {w} closer than {sep}");
                    }
                    pairs += 1;
                }
            }
        }
    }
    Ok(format!(
        "{codewords} codewords round-trip, 10000 projections, {pairs} KL pairs"
    ))
}

fn c8_tester() -> Outcome {
    let cfg = TesterConfig {
        v_true: ok("10".parse::<BitSequence>())?,
        mu: 1.0,
        sigma: 1.0,
        coverage: 0.9,
        trials: 200,
        master_seed: 2024,
        cap: DEFAULT_CAP,
        noiseless: false,
    };
    let r = ok(run_test_experiment(&cfg, None))?;
    let rate = r.correct as f64 / 200.0;
    let se = (rate * (1.0 - rate) / 200.0).sqrt();
    ensure!(r.trials.len() == 200, "trials {}", r.trials.len());
    ensure!(
        (coverage_of_beta(r.beta).unwrap() - 0.9).abs() < 1e-12,
        "beta {}",
        r.beta
    );
    ensure!(
        rate >= 0.9 - 3.0 * se,
        "all-correct rate {rate} < {}",
        0.9 - 3.0 * se
    );
    ensure!(r.pass, "library verdict disagrees");

    let quiet = run_test_experiment(
        &TesterConfig {
            noiseless: true,
            ..cfg.clone()
        },
        None,
    );
    let quiet = ok(quiet)?;
    ensure!(
        quiet.rate == 1.0 && quiet.correct == 200,
        "noiseless rate {}",
        quiet.rate
    );
    Ok(format!(
        "rate {rate:.3} with n_k = {:?}; noiseless rate 1",
        r.n_schedule
    ))
}

fn c9_ordering() -> Outcome {
    let grid = log_grid(3, 1_000_000, 20);
    ensure!(
        grid.first() == Some(&3) && grid.last() == Some(&1_000_000),
        "grid ends"
    );
    let mut checked = 0;
    for (mu, lip, d0) in [(1.0, 1.0, 1.0), (1.0, 4.0, 0.0), (0.5, 2.0, 10.0)] {
        for beta in [0.01, 0.05, 0.3, 0.6] {
            for &k in &grid {
                let env = ok(uniform_envelope(mu, lip, d0, beta, k))?;
                let last = ok(last_iterate_bound(mu, lip, d0, beta, k))?;
                ensure!(
                    env > last,
                    "k={k} beta={beta}: envelope {env} <= last-iterate {last}"
                );
                for alpha in [0.0, 0.5, 0.9] {
                    let low = ok(lower_bound_curve(mu, 1.0, alpha, k))?;
                    ensure!(low < env, "k={k}: lower curve {low} >= envelope {env}");
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} (k, beta, problem) points on [3, 1e6]"))
}

fn snapshot(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for e in ok(std::fs::read_dir(dir))? {
        let e = ok(e)?;
        out.insert(
            e.file_name().to_string_lossy().into_owned(),
            ok(std::fs::read(e.path()))?,
        );
    }
    Ok(out)
}

fn c10_determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_unisgd");
    let jobs: [(&str, &[&str]); 7] = [
        (
            "run",
            &[
                "--horizon",
                "500",
                "--spectrum",
                "1,3",
                "--x0",
                "1,-1",
                "--seed",
                "3",
            ],
        ),
        (
            "stopping",
            &["--epsilon", "0.01", "--max-steps", "2000", "--seed", "3"],
        ),
        ("curves", &["--kmax", "100000"]),
        (
            "verify-uniform",
            &["--horizon", "300", "--trials", "150", "--seed", "4"],
        ),
        (
            "verify-last",
            &["--probes", "10,100", "--trials", "150", "--seed", "4"],
        ),
        ("tester", &["--bits", "1", "--trials", "60", "--seed", "4"]),
        ("diag", &["--trials", "10000", "--seed", "4"]),
    ];
    let mut files = 0;
    for (cmd, args) in jobs {
        let mut snaps = Vec::new();
        for workers in ["1", "3", "1"] {
            let dir = ok(tempfile::tempdir())?;
            let o = ok(Command::new(exe)
                .arg(cmd)
                .args(args)
                .args(["--workers", workers, "--out"])
                .arg(dir.path())
                .output())?;
            let code = o.status.code();
            ensure!(
                code == Some(0) || code == Some(1),
                "{cmd}: exit {code:?}: {}",
                String::from_utf8_lossy(&o.stderr)
            );
            let snap = snapshot(dir.path())?;
            ensure!(
                snap.contains_key(&format!("{cmd}.json")),
                "{cmd}: missing json report: {:?}",
                snap.keys().collect::<Vec<_>>()
            );
            snaps.push(snap);
        }
        for s in &snaps[1..] {
            ensure!(
                s == &snaps[0],
                "{cmd}: outputs differ across repeats or worker counts"
            );
        }
        files += snaps[0].len();
    }
    Ok(format!(
        "7 subcommands x 3 runs (workers 1/3/1), {files} files byte-identical"
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("algebraic identities", c1_algebra),
        ("noiseless exactness", c2_noiseless),
        ("last-iterate guarantee", c3_last_iterate),
        ("uniform-in-time guarantee", c4_uniform),
        ("conditional MGF recursions", c5_conditional_mgf),
        ("sub-Gaussian diagnostics", c6_diagnostics),
        ("tester codes and separation", c7_tester_codes),
        ("tester end to end", c8_tester),
        ("certificate ordering", c9_ordering),
        ("determinism", c10_determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("criterion {n:>2} PASS  {name} ({secs:.1}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name} ({secs:.1}s): {why}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
