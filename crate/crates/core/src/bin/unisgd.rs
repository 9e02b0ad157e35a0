//! Command-line front end: configuration, dispatch and output emission.
//!
//! Exit codes: 0 success/PASS, 1 criterion FAIL or aborted run, 2 usage,
//! configuration or output-path error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use unisgd::certificates::coverage_of_beta;
use unisgd::config::{ConfigLayer, RunConfig};
use unisgd::engine::{run, run_until_stopping};
use unisgd::montecarlo::{
    estimate_last_iterate_violation, estimate_uniform_violation, fit_rate, sup_statistic_profile,
    Scenario, TrialSummary, Verdict,
};
use unisgd::plot::{plot_from_csv, LinePlot, Series};
use unisgd::problems::subgaussian_diagnostic;
use unisgd::report::{
    curves_table, to_json, write_curves_csv, write_file, write_profile_csv, write_quantiles_csv,
    write_sup_stats_csv, ASYMPTOTIC_NOTE,
};
use unisgd::rng::{NoiseStream, StreamId};
use unisgd::tester::{run_test_experiment, TesterConfig};
use unisgd::Error;

#[derive(Parser)]
#[command(
    name = "unisgd",
    version,
    about = "SGD certificates on strongly convex problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one SGD trajectory and export (k, gap, displacement).
    Run(Common),
    /// Run until ‖x_k − x_{k−1}‖ ≤ ε.
    Stopping(Common),
    /// Evaluate the bound curves on a log grid.
    Curves(Common),
    /// Estimate the uniform-envelope violation rate.
    VerifyUniform(Common),
    /// Estimate last-iterate violation rates at probe indices.
    VerifyLast(Common),
    /// Decode a hidden bit string with the optimizer-based test.
    Tester(Common),
    /// Monte Carlo sub-Gaussian diagnostics of the oracle noise.
    Diag(Common),
    /// Render a CSV produced by this tool as an SVG line plot.
    Plot(PlotArgs),
}

#[derive(Args)]
struct PlotArgs {
    /// Input CSV (first column is x).
    #[arg(long)]
    input: PathBuf,
    /// Output SVG path.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "")]
    title: String,
    /// Use linear instead of logarithmic axes.
    #[arg(long)]
    linear: bool,
}

#[derive(Args, Default)]
struct Common {
    /// INI-style config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    dimension: Option<usize>,
    /// Comma-separated eigenvalues.
    #[arg(long)]
    spectrum: Option<String>,
    #[arg(long)]
    center: Option<String>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    lip: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    schedule_mu: Option<f64>,
    #[arg(long)]
    schedule_lip: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    coverage: Option<f64>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated probe indices.
    #[arg(long)]
    probes: Option<String>,
    /// Comma-separated starting point.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    #[arg(long)]
    delta0: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    kmax: Option<u64>,
    #[arg(long)]
    t: Option<f64>,
    /// Hidden bit string for `tester`, e.g. 10.
    #[arg(long)]
    bits: Option<String>,
    #[arg(long)]
    cap: Option<u64>,
    #[arg(long)]
    noiseless: bool,
    #[arg(long)]
    prior_scale: Option<f64>,
    /// Output directory.
    #[arg(long, env = "UNISGD_OUT_DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism). Never changes results.
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn layer(&self) -> Result<ConfigLayer, Error> {
        let mut l = ConfigLayer::new();
        macro_rules! put {
            ($key:literal, $v:expr) => {
                if let Some(v) = &$v {
                    l.set($key, v.to_string())?;
                }
            };
        }
        put!("problem.kind", self.kind);
        put!("problem.dimension", self.dimension);
        put!("problem.spectrum", self.spectrum);
        put!("problem.center", self.center);
        put!("problem.mu", self.mu);
        put!("problem.lip", self.lip);
        put!("problem.theta", self.theta);
        put!("oracle.noise", self.noise);
        put!("oracle.sigma", self.sigma);
        put!("schedule.mu", self.schedule_mu);
        put!("schedule.lip", self.schedule_lip);
        put!("experiment.beta", self.beta);
        put!("experiment.alpha", self.alpha);
        put!("experiment.coverage", self.coverage);
        put!("experiment.horizon", self.horizon);
        put!("experiment.trials", self.trials);
        put!("experiment.seed", self.seed);
        put!("experiment.probes", self.probes);
        put!("experiment.x0", self.x0);
        put!("experiment.delta0", self.delta0);
        put!("experiment.epsilon", self.epsilon);
        put!("experiment.max_steps", self.max_steps);
        put!("experiment.kmax", self.kmax);
        put!("experiment.t", self.t);
        put!("experiment.bits", self.bits);
        put!("experiment.cap", self.cap);
        put!("experiment.prior_scale", self.prior_scale);
        if self.noiseless {
            l.set("experiment.noiseless", "true")?;
        }
        if let Some(p) = &self.out {
            l.set("output.dir", p.to_string_lossy())?;
        }
        put!("output.workers", self.workers);
        Ok(l)
    }

    fn resolve(&self) -> Result<RunConfig, Error> {
        let file = match &self.config {
            Some(p) => ConfigLayer::from_file(p)?,
            None => ConfigLayer::new(),
        };
        RunConfig::resolve(&file.merged(&self.layer()?))
    }
}

/// How a subcommand ended.
enum Outcome {
    Success,
    Fail,
}

fn usage_error(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidParameter { .. }
            | Error::Config(_)
            | Error::Io(_)
            | Error::DimensionMismatch { .. }
            | Error::Unattainable { .. }
    )
}

fn metadata<T: Serialize>(subcommand: &str, cfg: &RunConfig, body: T) -> serde_json::Value {
    json!({
        "tool": "unisgd",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": subcommand,
        "config": cfg,
        "config_ini": cfg.to_ini_string(),
        "result": body,
    })
}

struct Out<'a> {
    dir: &'a Path,
    name: &'a str,
}

impl Out<'_> {
    fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}{suffix}", self.name))
    }
    fn json<T: Serialize>(&self, suffix: &str, v: &T) -> Result<(), Error> {
        write_file(&self.path(suffix), to_json(v)?.as_bytes())
    }
    fn bytes(&self, suffix: &str, b: &[u8]) -> Result<(), Error> {
        write_file(&self.path(suffix), b)
    }
}

fn print_verdicts(verdicts: &[Verdict]) {
    for v in verdicts {
        println!(
            "[{}] {}: rate {:.5} ({} / {}), se {:.5}, threshold {:.5}",
            if v.pass { "PASS" } else { "FAIL" },
            v.criterion,
            v.rate,
            v.violations,
            v.trials,
            v.se,
            v.threshold
        );
    }
}

fn scenario(cfg: &RunConfig) -> Result<Scenario, Error> {
    Ok(Scenario {
        spec: cfg.problem.clone(),
        oracle: cfg.oracle,
        schedule: cfg.schedule,
        x0: cfg.experiment.x0.clone(),
        delta0_override: cfg.experiment.delta0,
    })
}

fn cmd_run(cfg: &RunConfig, out: &Out<'_>) -> Result<Outcome, Error> {
    let e = &cfg.experiment;
    let stream = StreamId::new(e.seed, 0);
    let traj = run(
        &cfg.problem,
        &cfg.oracle,
        &cfg.schedule,
        &e.x0,
        e.horizon,
        stream,
    )?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv)?;
    out.bytes(".csv", &csv)?;
    let fit = fit_rate(&traj.gap, (e.horizon / 100).max(1)).ok();
    let body = json!({
        "steps": traj.steps,
        "b": cfg.schedule.b(),
        "seed_provenance": traj.seed,
        "final_gap": traj.gap.last(),
        "rate_fit": fit,
    });
    out.json(".json", &metadata("run", cfg, body))?;
    println!(
        "ran {} steps, final gap {:e}",
        traj.steps,
        traj.gap.last().copied().unwrap_or(f64::NAN)
    );
    Ok(Outcome::Success)
}

fn cmd_stopping(cfg: &RunConfig, out: &Out<'_>) -> Result<Outcome, Error> {
    let e = &cfg.experiment;
    let stream = StreamId::new(e.seed, 0);
    let (tau, traj) = run_until_stopping(
        &cfg.problem,
        &cfg.oracle,
        &cfg.schedule,
        &e.x0,
        e.epsilon,
        e.max_steps,
        stream,
    )?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv)?;
    out.bytes(".csv", &csv)?;
    let body = json!({
        "tau": tau,
        "steps": traj.steps,
        "seed_provenance": traj.seed,
        "gap_at_stop": traj.gap.last(),
    });
    out.json(".json", &metadata("stopping", cfg, body))?;
    match tau {
        Some(t) => println!("tau = {t}"),
        None => println!("criterion not met within {} steps", e.max_steps),
    }
    Ok(Outcome::Success)
}

fn cmd_curves(cfg: &RunConfig, out: &Out<'_>) -> Result<Outcome, Error> {
    let e = &cfg.experiment;
    let scn = scenario(cfg)?;
    let params = scn.bound_params()?;
    let rows = curves_table(&params, e.beta, e.alpha, e.prior_scale, e.kmax, 20)?;
    let mut csv = Vec::new();
    write_curves_csv(&rows, &mut csv)?;
    out.bytes(".csv", &csv)?;
    let text = String::from_utf8_lossy(&csv).into_owned();
    let svg = plot_from_csv(&text, "Bound curves", true, true)?.to_svg()?;
    out.bytes(".svg", svg.as_bytes())?;
    let body = json!({
        "params": params,
        "beta": e.beta,
        "alpha": e.alpha,
        "coverage": coverage_of_beta(e.beta)?,
        "rows": rows.len(),
        "notes": [ASYMPTOTIC_NOTE],
    });
    out.json(".json", &metadata("curves", cfg, body))?;
    println!("wrote {} rows", rows.len());
    Ok(Outcome::Success)
}

fn summary_outputs(
    cfg: &RunConfig,
    out: &Out<'_>,
    scn: &Scenario,
    summary: &TrialSummary,
    envelope_beta: Option<f64>,
) -> Result<(), Error> {
    let params = scn.bound_params()?;
    let last_beta = cfg.experiment.beta;
    let mut q = Vec::new();
    write_quantiles_csv(
        &summary.quantiles,
        &params,
        last_beta,
        envelope_beta,
        &mut q,
    )?;
    out.bytes("-quantiles.csv", &q)?;
    let text = String::from_utf8_lossy(&q).into_owned();
    out.bytes(
        "-quantiles.svg",
        plot_from_csv(&text, "Gap quantiles vs certificates", true, true)?
            .to_svg()?
            .as_bytes(),
    )?;
    let mut s = Vec::new();
    write_sup_stats_csv(&summary.sup_stats, &mut s)?;
    out.bytes("-sup.csv", &s)?;
    Ok(())
}

fn profile_outputs(cfg: &RunConfig, out: &Out<'_>, horizon: u64) -> Result<(), Error> {
    if horizon < 3 {
        return Ok(());
    }
    let e = &cfg.experiment;
    let traj = run(
        &cfg.problem,
        &cfg.oracle,
        &cfg.schedule,
        &e.x0,
        horizon,
        StreamId::new(e.seed, 0),
    );
    let Ok(traj) = traj else { return Ok(()) };
    let profile = sup_statistic_profile(&traj.gap, cfg.schedule.b())?;
    let mut p = Vec::new();
    write_profile_csv(&profile, &mut p)?;
    out.bytes("-profile.csv", &p)?;
    let plot = LinePlot {
        title: "Running sup of gap (k+B-1) / ln ln k, trial 0".into(),
        x_label: "K".into(),
        y_label: "sup statistic".into(),
        log_x: true,
        log_y: false,
        series: vec![Series {
            label: "sup statistic".into(),
            points: profile.iter().map(|&(k, v)| (k as f64, v)).collect(),
        }],
    };
    out.bytes("-profile.svg", plot.to_svg()?.as_bytes())
}

fn cmd_verify_uniform(cfg: &RunConfig, out: &Out<'_>) -> Result<Outcome, Error> {
    let e = &cfg.experiment;
    let scn = scenario(cfg)?;
    let summary =
        estimate_uniform_violation(&scn, e.beta, e.horizon, e.trials, e.seed, cfg.workers)?;
    summary_outputs(cfg, out, &scn, &summary, Some(e.beta))?;
    profile_outputs(cfg, out, e.horizon)?;
    let verdicts = summary.verdicts();
    print_verdicts(&verdicts);
    let body = json!({
        "verdicts": verdicts,
        "violations_uniform": summary.violations_uniform,
        "aborted": summary.aborted,
        "coverage": coverage_of_beta(e.beta)?,
        "pass": summary.all_pass(),
        "notes": [ASYMPTOTIC_NOTE],
    });
    out.json(".json", &metadata("verify-uniform", cfg, body))?;
    Ok(if summary.all_pass() {
        Outcome::Success
    } else {
        Outcome::Fail
    })
}

fn cmd_verify_last(cfg: &RunConfig, out: &Out<'_>) -> Result<Outcome, Error> {
    let e = &cfg.experiment;
    let scn = scenario(cfg)?;
    let summary =
        estimate_last_iterate_violation(&scn, e.beta, &e.probes, e.trials, e.seed, cfg.workers)?;
    summary_outputs(cfg, out, &scn, &summary, None)?;
    let verdicts = summary.verdicts();
    print_verdicts(&verdicts);
    let body = json!({
        "verdicts": verdicts,
        "violations_last": summary.violations_last,
        "aborted": summary.aborted,
        "pass": summary.all_pass(),
    });
    out.json(".json", &metadata("verify-last", cfg, body))?;
    Ok(if summary.all_pass() {
        Outcome::Success
    } else {
        Outcome::Fail
    })
}

fn cmd_tester(cfg: &RunConfig, out: &Out<'_>) -> Result<Outcome, Error> {
    let e = &cfg.experiment;
    let tcfg = TesterConfig {
        v_true: e.bits.clone(),
        mu: cfg.problem.mu(),
        sigma: cfg.oracle.sigma.max(f64::MIN_POSITIVE),
        coverage: e.coverage,
        trials: e.trials,
        master_seed: e.seed,
        cap: e.cap,
        noiseless: e.noiseless || cfg.oracle.noise == unisgd::problems::NoiseKind::Zero,
    };
    let report = run_test_experiment(&tcfg, cfg.workers)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["trial_index", "bit", "n_k", "distance", "decoded_bit"])?;
    for t in &report.trials {
        for (i, d) in t.distances.iter().enumerate() {
            let bit = t
                .decoded
                .as_ref()
                .map(|b| b.bit(i + 1).to_string())
                .unwrap_or_default();
            w.write_record([
                t.trial_index.to_string(),
                (i + 1).to_string(),
                report.n_schedule[i].to_string(),
                format!("{d:e}"),
                bit,
            ])?;
        }
    }
    let csv = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    out.bytes(".csv", &csv)?;
    println!(
        "[{}] all bits correct: rate {:.4} ({} / {}), threshold {:.4}, n_k = {:?}",
        if report.pass { "PASS" } else { "FAIL" },
        report.rate,
        report.correct,
        report.trials.len(),
        report.threshold,
        report.n_schedule
    );
    let pass = report.pass;
    out.json(".json", &metadata("tester", cfg, report))?;
    Ok(if pass {
        Outcome::Success
    } else {
        Outcome::Fail
    })
}

fn cmd_diag(cfg: &RunConfig, out: &Out<'_>) -> Result<Outcome, Error> {
    let e = &cfg.experiment;
    let trials = e.trials.max(unisgd::problems::MIN_DIAGNOSTIC_TRIALS);
    let mut stream = NoiseStream::new(
        StreamId::new(e.seed, 0),
        cfg.oracle.normals_per_step(&cfg.problem),
    );
    let r = subgaussian_diagnostic(&cfg.oracle, &cfg.problem, &e.x0, e.t, trials, &mut stream)?;
    let pass = r.dominated(3.0);
    println!(
        "[{}] E exp(t|noise|^2) = {:.5} (bound {:.5}); E exp(<phi, noise>) = {:.5} (bound {:.5})",
        if pass { "PASS" } else { "FAIL" },
        r.empirical_mgf_sqnorm,
        r.bound_sqnorm,
        r.empirical_mgf_directional,
        r.bound_directional
    );
    out.json(
        ".json",
        &metadata("diag", cfg, json!({ "report": r, "pass": pass })),
    )?;
    Ok(if pass {
        Outcome::Success
    } else {
        Outcome::Fail
    })
}

fn cmd_plot(a: &PlotArgs) -> Result<Outcome, Error> {
    let text = std::fs::read_to_string(&a.input)
        .map_err(|e| Error::Io(format!("{}: {e}", a.input.display())))?;
    let svg = plot_from_csv(&text, &a.title, !a.linear, !a.linear)
        .and_then(|p| p.to_svg())
        .map_err(|e| Error::Config(e.to_string()))?;
    write_file(&a.output, svg.as_bytes())?;
    Ok(Outcome::Success)
}

fn dispatch(cli: Cli) -> Result<Outcome, Error> {
    let (name, common) = match &cli.command {
        Command::Plot(a) => return cmd_plot(a),
        Command::Run(c) => ("run", c),
        Command::Stopping(c) => ("stopping", c),
        Command::Curves(c) => ("curves", c),
        Command::VerifyUniform(c) => ("verify-uniform", c),
        Command::VerifyLast(c) => ("verify-last", c),
        Command::Tester(c) => ("tester", c),
        Command::Diag(c) => ("diag", c),
    };
    let cfg = common.resolve()?;
    let out = Out {
        dir: &cfg.out_dir,
        name,
    };
    match &cli.command {
        Command::Run(_) => cmd_run(&cfg, &out),
        Command::Stopping(_) => cmd_stopping(&cfg, &out),
        Command::Curves(_) => cmd_curves(&cfg, &out),
        Command::VerifyUniform(_) => cmd_verify_uniform(&cfg, &out),
        Command::VerifyLast(_) => cmd_verify_last(&cfg, &out),
        Command::Tester(_) => cmd_tester(&cfg, &out),
        Command::Diag(_) => cmd_diag(&cfg, &out),
        Command::Plot(_) => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if usage_error(&e) { 2 } else { 1 })
        }
    }
}
