//! Tabular and JSON outputs shared by the command-line tool and the FFI.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::certificates::{
    coverage_of_beta, log_grid, lower_bound_curve, prior_art_reference, BoundParams,
};
use crate::error::{Error, Result};
use crate::montecarlo::GapQuantiles;

pub const ASYMPTOTIC_NOTE: &str =
    "The lower curve and the log log k growth of the sup-statistic are \
asymptotic statements (they hold for infinitely many n); finite-horizon values carry no guarantee.";

/// One row of the `curves` table; cells are absent where a curve is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveRow {
    pub k: u64,
    pub last_iterate: f64,
    pub uniform_envelope: f64,
    pub lower_curve: Option<f64>,
    pub prior_art_reference: Option<f64>,
}

/// Evaluates every bound curve on a log grid over `[1, kmax]`.
pub fn curves_table(
    params: &BoundParams,
    beta: f64,
    alpha: f64,
    prior_scale: f64,
    kmax: u64,
    per_decade: u32,
) -> Result<Vec<CurveRow>> {
    if kmax < 1 {
        return Err(Error::param("kmax", "must be >= 1"));
    }
    // surface domain errors before the loop
    coverage_of_beta(beta)?;
    log_grid(1, kmax, per_decade)
        .into_iter()
        .map(|k| {
            Ok(CurveRow {
                k,
                last_iterate: params.last_iterate(beta, k)?,
                uniform_envelope: params.envelope(beta, k)?,
                lower_curve: if k >= 3 {
                    Some(lower_bound_curve(params.mu, params.sigma, alpha, k)?)
                } else {
                    None
                },
                prior_art_reference: if k >= 2 {
                    Some(prior_art_reference(beta, k, prior_scale)?)
                } else {
                    None
                },
            })
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn write_curves_csv<W: Write>(rows: &[CurveRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "k",
        "last_iterate",
        "uniform_envelope",
        "lower_curve",
        "prior_art_reference",
    ])?;
    for r in rows {
        out.write_record([
            r.k.to_string(),
            cell(Some(r.last_iterate)),
            cell(Some(r.uniform_envelope)),
            cell(r.lower_curve),
            cell(r.prior_art_reference),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Gap quantiles next to the certificates they are checked against.
pub fn write_quantiles_csv<W: Write>(
    rows: &[GapQuantiles],
    params: &BoundParams,
    beta_last: f64,
    beta_envelope: Option<f64>,
    w: W,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["k", "q50", "q90", "q99", "max", "last_iterate"];
    if beta_envelope.is_some() {
        header.push("uniform_envelope");
    }
    out.write_record(&header)?;
    for q in rows {
        let mut rec = vec![
            q.k.to_string(),
            cell(Some(q.q50)),
            cell(Some(q.q90)),
            cell(Some(q.q99)),
            cell(Some(q.max)),
            cell(Some(params.last_iterate(beta_last, q.k)?)),
        ];
        if let Some(b) = beta_envelope {
            rec.push(cell(Some(params.envelope(b, q.k)?)));
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_sup_stats_csv<W: Write>(stats: &[Option<f64>], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["trial_index", "sup_statistic"])?;
    for (i, s) in stats.iter().enumerate() {
        out.write_record([i.to_string(), cell(*s)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_profile_csv<W: Write>(profile: &[(u64, f64)], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["k", "sup_statistic"])?;
    for (k, v) in profile {
        out.write_record([k.to_string(), cell(Some(*v))])?;
    }
    out.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes `bytes` to `path`, creating the parent directory.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_have_four_bound_columns() {
        let p = BoundParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let rows = curves_table(&p, 0.05, 0.5, 1.0, 1000, 5).unwrap();
        assert_eq!(rows[0].k, 1);
        assert!(rows[0].lower_curve.is_none() && rows[0].prior_art_reference.is_none());
        let mut buf = Vec::new();
        write_curves_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(
            text.starts_with("k,last_iterate,uniform_envelope,lower_curve,prior_art_reference\n")
        );
        assert!(text.lines().nth(1).unwrap().ends_with(",,"));
        assert!(curves_table(&p, 1.0, 0.5, 1.0, 10, 5).is_err());
    }
}
