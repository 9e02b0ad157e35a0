//! C ABI over `unisgd`.
//!
//! Scenarios are opaque heap handles created by `unisgd_scenario_new_*` and
//! released with [`unisgd_scenario_free`]. Every fallible call returns an
//! [`UnisgdStatus`]; on failure a message is available from
//! [`unisgd_last_error_message`] on the same thread until the next call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use unisgd::certificates;
use unisgd::config::{ConfigLayer, RunConfig};
use unisgd::engine::run;
use unisgd::montecarlo::{estimate_last_iterate_violation, estimate_uniform_violation, Scenario};
use unisgd::problems::{NoiseKind, OracleModel, ProblemSpec};
use unisgd::rng::StreamId;
use unisgd::tester::{encode_theta, project_to_v, BitSequence};
use unisgd::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnisgdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    DimensionMismatch = 3,
    NonFinite = 4,
    Unattainable = 5,
    Degenerate = 6,
    Config = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnisgdNoise {
    Zero = 0,
    IsotropicGaussian = 1,
    TesterSample = 2,
}

impl From<UnisgdNoise> for NoiseKind {
    fn from(n: UnisgdNoise) -> Self {
        match n {
            UnisgdNoise::Zero => NoiseKind::Zero,
            UnisgdNoise::IsotropicGaussian => NoiseKind::IsotropicGaussian,
            UnisgdNoise::TesterSample => NoiseKind::TesterSample,
        }
    }
}

/// Uniform-envelope violation estimate.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UnisgdViolationSummary {
    pub trials: u64,
    pub violations: u64,
    pub aborted: u64,
    pub rate: f64,
    pub se: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Opaque scenario handle.
pub struct UnisgdScenario(Scenario);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> UnisgdStatus {
    match e {
        Error::DimensionMismatch { .. } => UnisgdStatus::DimensionMismatch,
        Error::InvalidParameter { .. } => UnisgdStatus::InvalidParameter,
        Error::NonFinite { .. } => UnisgdStatus::NonFinite,
        Error::Unattainable { .. } => UnisgdStatus::Unattainable,
        Error::Degenerate(_) => UnisgdStatus::Degenerate,
        Error::Config(_) => UnisgdStatus::Config,
        Error::Io(_) => UnisgdStatus::Io,
    }
}

enum Fail {
    Null(&'static str),
    Buffer(String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> UnisgdStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => UnisgdStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            UnisgdStatus::NullPointer
        }
        Ok(Err(Fail::Buffer(msg))) => {
            set_error(msg);
            UnisgdStatus::BufferTooSmall
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            UnisgdStatus::Panic
        }
    }
}

unsafe fn slice_in<'a, T>(p: *const T, n: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn handle<'a>(h: *const UnisgdScenario) -> Result<&'a Scenario, Fail> {
    h.as_ref().map(|s| &s.0).ok_or(Fail::Null("scenario"))
}

fn workers(n: usize) -> Option<usize> {
    (n > 0).then_some(n)
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn unisgd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// NUL-terminated version string with static lifetime.
#[no_mangle]
pub extern "C" fn unisgd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

fn boxed(s: Scenario, out: *mut *mut UnisgdScenario) -> Result<(), Fail> {
    // SAFETY: caller checked `out` is non-null
    unsafe { *out = Box::into_raw(Box::new(UnisgdScenario(s))) };
    Ok(())
}

/// Diagonal quadratic `½ Σ λ_i x_i²` with the given oracle.
///
/// # Safety
/// `spectrum` and `x0` must point to `dimension` readable doubles; `out`
/// must be writable. On success `*out` owns a handle for
/// [`unisgd_scenario_free`].
#[no_mangle]
pub unsafe extern "C" fn unisgd_scenario_new_quadratic(
    spectrum: *const f64,
    x0: *const f64,
    dimension: usize,
    noise: UnisgdNoise,
    sigma: f64,
    out: *mut *mut UnisgdScenario,
) -> UnisgdStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let spec =
            ProblemSpec::diagonal_quadratic(slice_in(spectrum, dimension, "spectrum")?.to_vec())?;
        let oracle = OracleModel::new(noise.into(), sigma)?;
        let x0 = slice_in(x0, dimension, "x0")?.to_vec();
        boxed(Scenario::new(spec, oracle, x0)?, out)
    })
}

/// One-dimensional `(μ/2)(x − θ)²`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn unisgd_scenario_new_tester(
    mu: f64,
    theta: f64,
    x0: f64,
    noise: UnisgdNoise,
    sigma: f64,
    out: *mut *mut UnisgdScenario,
) -> UnisgdStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let spec = ProblemSpec::tester_location(mu, theta)?;
        let oracle = OracleModel::new(noise.into(), sigma)?;
        boxed(Scenario::new(spec, oracle, vec![x0])?, out)
    })
}

/// Scenario from INI configuration text (same keys as the CLI).
///
/// # Safety
/// `ini` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn unisgd_scenario_from_ini(
    ini: *const c_char,
    out: *mut *mut UnisgdScenario,
) -> UnisgdStatus {
    guard(|| {
        if ini.is_null() {
            return Err(Fail::Null("ini"));
        }
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let text = CStr::from_ptr(ini)
            .to_str()
            .map_err(|e| Error::Config(e.to_string()))?;
        let cfg = RunConfig::resolve(&ConfigLayer::from_ini_str(text)?)?;
        let scn = Scenario {
            spec: cfg.problem,
            oracle: cfg.oracle,
            schedule: cfg.schedule,
            x0: cfg.experiment.x0,
            delta0_override: cfg.experiment.delta0,
        };
        boxed(scn, out)
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `h` must come from a `unisgd_scenario_new_*` call and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn unisgd_scenario_free(h: *mut UnisgdScenario) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Problem dimension, or 0 for NULL.
///
/// # Safety
/// `h` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn unisgd_scenario_dimension(h: *const UnisgdScenario) -> usize {
    h.as_ref().map_or(0, |s| s.0.spec.dimension())
}

/// Schedule offset `B` and initial gap `Δ0`.
///
/// # Safety
/// `h` must be a live handle; `b_out` and `delta0_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn unisgd_scenario_constants(
    h: *const UnisgdScenario,
    b_out: *mut f64,
    delta0_out: *mut f64,
) -> UnisgdStatus {
    guard(|| {
        let s = handle(h)?;
        let b = out_ref(b_out, "b_out")?;
        let d = out_ref(delta0_out, "delta0_out")?;
        *b = s.schedule.b();
        *d = s.delta0()?;
        Ok(())
    })
}

/// Runs one trajectory and writes `Δ_0..Δ_horizon` into `gaps`.
///
/// # Safety
/// `h` must be a live handle; `gaps` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn unisgd_run_gaps(
    h: *const UnisgdScenario,
    horizon: u64,
    master_seed: u64,
    trial_index: u64,
    gaps: *mut f64,
    len: usize,
) -> UnisgdStatus {
    guard(|| {
        let s = handle(h)?;
        let need = horizon as usize + 1;
        if len < need {
            return Err(Fail::Buffer(format!("gaps needs {need} slots, got {len}")));
        }
        if gaps.is_null() {
            return Err(Fail::Null("gaps"));
        }
        let t = run(
            &s.spec,
            &s.oracle,
            &s.schedule,
            &s.x0,
            horizon,
            StreamId::new(master_seed, trial_index),
        )?;
        slice::from_raw_parts_mut(gaps, need).copy_from_slice(&t.gap);
        Ok(())
    })
}

/// Monte Carlo estimate of the uniform-envelope violation rate.
/// `workers = 0` uses all available cores; the result never depends on it.
///
/// # Safety
/// `h` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn unisgd_verify_uniform(
    h: *const UnisgdScenario,
    beta: f64,
    horizon: u64,
    trials: u64,
    master_seed: u64,
    n_workers: usize,
    out: *mut UnisgdViolationSummary,
) -> UnisgdStatus {
    guard(|| {
        let s = handle(h)?;
        let out = out_ref(out, "out")?;
        let sum =
            estimate_uniform_violation(s, beta, horizon, trials, master_seed, workers(n_workers))?;
        let v = &sum.verdicts()[0];
        *out = UnisgdViolationSummary {
            trials: v.trials,
            violations: v.violations,
            aborted: sum.aborted,
            rate: v.rate,
            se: v.se,
            threshold: v.threshold,
            pass: v.pass,
        };
        Ok(())
    })
}

/// Per-probe last-iterate violation counts, in the order of `probes`.
///
/// # Safety
/// `h` must be a live handle; `probes` and `violations` must point to
/// `n_probes` readable / writable elements.
#[no_mangle]
pub unsafe extern "C" fn unisgd_verify_last(
    h: *const UnisgdScenario,
    beta: f64,
    probes: *const u64,
    n_probes: usize,
    trials: u64,
    master_seed: u64,
    n_workers: usize,
    violations: *mut u64,
) -> UnisgdStatus {
    guard(|| {
        let s = handle(h)?;
        let probes = slice_in(probes, n_probes, "probes")?;
        if violations.is_null() && n_probes > 0 {
            return Err(Fail::Null("violations"));
        }
        let sum = estimate_last_iterate_violation(
            s,
            beta,
            probes,
            trials,
            master_seed,
            workers(n_workers),
        )?;
        let out = slice::from_raw_parts_mut(violations, n_probes);
        for (o, k) in out.iter_mut().zip(probes) {
            *o = sum.violations_last[k];
        }
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn unisgd_last_iterate_bound(
    mu: f64,
    lip: f64,
    delta0: f64,
    beta: f64,
    k: u64,
    out: *mut f64,
) -> UnisgdStatus {
    guard(|| {
        *out_ref(out, "out")? = certificates::last_iterate_bound(mu, lip, delta0, beta, k)?;
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn unisgd_uniform_envelope(
    mu: f64,
    lip: f64,
    delta0: f64,
    beta: f64,
    k: u64,
    out: *mut f64,
) -> UnisgdStatus {
    guard(|| {
        *out_ref(out, "out")? = certificates::uniform_envelope(mu, lip, delta0, beta, k)?;
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn unisgd_lower_bound_curve(
    mu: f64,
    sigma: f64,
    alpha: f64,
    n: u64,
    out: *mut f64,
) -> UnisgdStatus {
    guard(|| {
        *out_ref(out, "out")? = certificates::lower_bound_curve(mu, sigma, alpha, n)?;
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn unisgd_coverage_of_beta(beta: f64, out: *mut f64) -> UnisgdStatus {
    guard(|| {
        *out_ref(out, "out")? = certificates::coverage_of_beta(beta)?;
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn unisgd_beta_for_coverage(coverage: f64, out: *mut f64) -> UnisgdStatus {
    guard(|| {
        *out_ref(out, "out")? = certificates::beta_for_coverage(coverage)?;
        Ok(())
    })
}

/// `θ(v)` for `depth` bits given as bytes 0/1.
///
/// # Safety
/// `bits` must point to `depth` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn unisgd_encode_theta(
    bits: *const u8,
    depth: usize,
    out: *mut f64,
) -> UnisgdStatus {
    guard(|| {
        let v = BitSequence::new(slice_in(bits, depth, "bits")?.to_vec())?;
        *out_ref(out, "out")? = encode_theta(&v);
        Ok(())
    })
}

/// Nearest depth-`depth` codeword to `theta`, written as bytes 0/1.
///
/// # Safety
/// `bits_out` must point to `depth` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn unisgd_project_to_v(
    theta: f64,
    depth: usize,
    bits_out: *mut u8,
) -> UnisgdStatus {
    guard(|| {
        let v = project_to_v(theta, depth)?;
        if bits_out.is_null() {
            return Err(Fail::Null("bits_out"));
        }
        slice::from_raw_parts_mut(bits_out, depth).copy_from_slice(v.bits());
        Ok(())
    })
}
