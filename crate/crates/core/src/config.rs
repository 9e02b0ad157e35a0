//! Flat INI-style run configuration.
//!
//! Values are collected as raw `section.key` strings in layers (defaults,
//! config file, command-line flags), merged with later layers winning, and
//! only then parsed and validated into a [`RunConfig`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ini::Ini;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montecarlo::DEFAULT_PROBES;
use crate::problems::{NoiseKind, OracleModel, ProblemSpec};
use crate::schedule::ScheduleSpec;
use crate::tester::{BitSequence, DEFAULT_CAP};

/// Every accepted `section.key`.
pub const KEYS: &[&str] = &[
    "problem.kind",
    "problem.dimension",
    "problem.spectrum",
    "problem.center",
    "problem.mu",
    "problem.lip",
    "problem.theta",
    "oracle.noise",
    "oracle.sigma",
    "schedule.mu",
    "schedule.lip",
    "experiment.beta",
    "experiment.alpha",
    "experiment.coverage",
    "experiment.horizon",
    "experiment.trials",
    "experiment.seed",
    "experiment.probes",
    "experiment.x0",
    "experiment.delta0",
    "experiment.epsilon",
    "experiment.max_steps",
    "experiment.kmax",
    "experiment.t",
    "experiment.bits",
    "experiment.cap",
    "experiment.noiseless",
    "experiment.prior_scale",
    "output.dir",
    "output.workers",
];

/// Unparsed `section.key → value` overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigLayer(BTreeMap<String, String>);

impl ConfigLayer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        self.0.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn from_ini_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut layer = Self::new();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if props.iter().next().is_some() {
                    return Err(Error::Config("keys outside of a section".into()));
                }
                continue;
            };
            for (k, v) in props.iter() {
                layer.set(&format!("{section}.{k}"), v.trim())?;
            }
        }
        Ok(layer)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_ini_str(&text)
    }

    /// `self` overridden by `over`.
    pub fn merged(mut self, over: &ConfigLayer) -> Self {
        for (k, v) in &over.0 {
            self.0.insert(k.clone(), v.clone());
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub beta: f64,
    pub alpha: f64,
    pub coverage: f64,
    pub horizon: u64,
    pub trials: u64,
    pub seed: u64,
    pub probes: Vec<u64>,
    pub x0: Vec<f64>,
    pub delta0: Option<f64>,
    pub epsilon: f64,
    pub max_steps: u64,
    pub kmax: u64,
    pub t: f64,
    pub bits: BitSequence,
    pub cap: u64,
    pub noiseless: bool,
    pub prior_scale: f64,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub oracle: OracleModel,
    pub schedule: ScheduleSpec,
    pub experiment: ExperimentParams,
    /// Not echoed: results do not depend on it.
    #[serde(skip)]
    pub workers: Option<usize>,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

fn parse_num<T: std::str::FromStr>(key: &str, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{s}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| parse_num(key, p))
        .collect()
}

fn parse_bool(key: &str, s: &str) -> Result<bool> {
    match s.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!(
            "`{key}`: expected a boolean, got `{other}`"
        ))),
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

struct Lookup<'a>(&'a ConfigLayer);

impl Lookup<'_> {
    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.0.get(key).map(|s| parse_num(key, s)).transpose()
    }
    fn num_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.num(key)?.unwrap_or(default))
    }
    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.0.get(key).map(|s| parse_list(key, s)).transpose()
    }
}

fn resolve_problem(l: &Lookup<'_>) -> Result<ProblemSpec> {
    let kind = l.0.get("problem.kind").unwrap_or("diagonal-quadratic");
    let mu: Option<f64> = l.num("problem.mu")?;
    let lip: Option<f64> = l.num("problem.lip")?;
    match kind {
        "tester-location" => {
            let mu = mu.unwrap_or(1.0);
            if let Some(lip) = lip {
                if lip != mu {
                    return Err(Error::Config("tester-location requires lip = mu".into()));
                }
            }
            ProblemSpec::tester_location(mu, l.num_or("problem.theta", 0.0)?)
        }
        "diagonal-quadratic" => {
            let spectrum = match l.list::<f64>("problem.spectrum")? {
                Some(s) => {
                    let spec = ProblemSpec::diagonal_quadratic(s.clone())?;
                    if mu.is_some_and(|m| m != spec.mu()) || lip.is_some_and(|m| m != spec.lip()) {
                        return Err(Error::Config(
                            "mu/lip disagree with the extremes of spectrum".into(),
                        ));
                    }
                    s
                }
                None => {
                    let mu = mu.unwrap_or(1.0);
                    let lip = lip.unwrap_or(mu);
                    if lip < mu {
                        return Err(Error::Config(format!("need lip >= mu, got {lip} < {mu}")));
                    }
                    let d: usize = l.num_or("problem.dimension", if lip == mu { 1 } else { 2 })?;
                    if d == 0 || (d == 1 && lip != mu) {
                        return Err(Error::Config("dimension too small for mu != lip".into()));
                    }
                    (0..d)
                        .map(|i| {
                            if d == 1 {
                                mu
                            } else if i == d - 1 {
                                lip
                            } else {
                                mu + (lip - mu) * i as f64 / (d - 1) as f64
                            }
                        })
                        .collect()
                }
            };
            if let Some(d) = l.num::<usize>("problem.dimension")? {
                if d != spectrum.len() {
                    return Err(Error::Config("dimension disagrees with spectrum".into()));
                }
            }
            match l.list::<f64>("problem.center")? {
                Some(c) => ProblemSpec::diagonal_quadratic_centered(spectrum, c),
                None => ProblemSpec::diagonal_quadratic(spectrum),
            }
        }
        other => Err(Error::Config(format!("unknown problem kind `{other}`"))),
    }
}

impl RunConfig {
    pub fn resolve(layer: &ConfigLayer) -> Result<Self> {
        let l = Lookup(layer);
        let problem = resolve_problem(&l)?;
        let default_noise = if problem.theta().is_some() {
            NoiseKind::TesterSample
        } else {
            NoiseKind::IsotropicGaussian
        };
        let noise = match layer.get("oracle.noise") {
            Some(s) => s.parse()?,
            None => default_noise,
        };
        let oracle = OracleModel::new(noise, l.num_or("oracle.sigma", 1.0)?)?;
        oracle.check_compatible(&problem)?;
        let schedule = ScheduleSpec::new(
            l.num_or("schedule.mu", problem.mu())?,
            l.num_or("schedule.lip", problem.lip())?,
        )?;

        let d = problem.dimension();
        let x0 = l
            .list::<f64>("experiment.x0")?
            .unwrap_or_else(|| vec![1.0; d]);
        if x0.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x0.len(),
            });
        }
        let experiment = ExperimentParams {
            beta: l.num_or("experiment.beta", 0.05)?,
            alpha: l.num_or("experiment.alpha", 0.5)?,
            coverage: l.num_or("experiment.coverage", 0.9)?,
            horizon: l.num_or("experiment.horizon", 10_000)?,
            trials: l.num_or("experiment.trials", 2_000)?,
            seed: l.num_or("experiment.seed", 0)?,
            probes: l
                .list("experiment.probes")?
                .unwrap_or_else(|| DEFAULT_PROBES.to_vec()),
            x0,
            delta0: l.num("experiment.delta0")?,
            epsilon: l.num_or("experiment.epsilon", 1e-3)?,
            max_steps: l.num_or("experiment.max_steps", 100_000)?,
            kmax: l.num_or("experiment.kmax", 1_000_000)?,
            t: l.num_or("experiment.t", 0.25)?,
            bits: layer.get("experiment.bits").unwrap_or("10").parse()?,
            cap: l.num_or("experiment.cap", DEFAULT_CAP)?,
            noiseless: layer
                .get("experiment.noiseless")
                .map(|s| parse_bool("experiment.noiseless", s))
                .transpose()?
                .unwrap_or(false),
            prior_scale: l.num_or("experiment.prior_scale", 1.0)?,
        };
        let workers = l.num::<usize>("output.workers")?;
        if workers == Some(0) {
            return Err(Error::Config("`output.workers` must be >= 1".into()));
        }
        Ok(Self {
            problem,
            oracle,
            schedule,
            experiment,
            workers,
            out_dir: PathBuf::from(layer.get("output.dir").unwrap_or(".")),
        })
    }

    /// INI text that resolves back to this configuration (output section
    /// excluded).
    pub fn to_ini_string(&self) -> String {
        let mut ini = Ini::new();
        let p = &self.problem;
        match p.spectrum() {
            Some(s) => {
                ini.with_section(Some("problem"))
                    .set("kind", "diagonal-quadratic")
                    .set("spectrum", join(s))
                    .set("center", join(p.x_star()));
            }
            None => {
                ini.with_section(Some("problem"))
                    .set("kind", "tester-location")
                    .set("mu", p.mu().to_string())
                    .set("theta", p.theta().unwrap_or(0.0).to_string());
            }
        }
        ini.with_section(Some("oracle"))
            .set("noise", self.oracle.noise.to_string())
            .set("sigma", self.oracle.sigma.to_string());
        ini.with_section(Some("schedule"))
            .set("mu", self.schedule.mu().to_string())
            .set("lip", self.schedule.lip().to_string());
        let e = &self.experiment;
        let mut sec = ini.with_section(Some("experiment"));
        sec.set("beta", e.beta.to_string())
            .set("alpha", e.alpha.to_string())
            .set("coverage", e.coverage.to_string())
            .set("horizon", e.horizon.to_string())
            .set("trials", e.trials.to_string())
            .set("seed", e.seed.to_string())
            .set("probes", join(&e.probes))
            .set("x0", join(&e.x0))
            .set("epsilon", e.epsilon.to_string())
            .set("max_steps", e.max_steps.to_string())
            .set("kmax", e.kmax.to_string())
            .set("t", e.t.to_string())
            .set("bits", e.bits.to_string())
            .set("cap", e.cap.to_string())
            .set("noiseless", e.noiseless.to_string())
            .set("prior_scale", e.prior_scale.to_string());
        if let Some(d) = e.delta0 {
            sec.set("delta0", d.to_string());
        }
        let mut buf = Vec::new();
        ini.write_to(&mut buf).expect("write to Vec");
        String::from_utf8(buf).expect("ini output is utf-8")
    }
}
