//! Minimal, dependency-free SVG line plots with optional log axes.
//!
//! Output is a pure function of the input data (fixed precision, fixed
//! palette), so regenerating a plot gives identical bytes.

use std::fmt::Write;

use crate::error::{Error, Result};

const W: f64 = 760.0;
const H: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

struct Axis {
    log: bool,
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Option<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let t = if log { v.log10() } else { v };
            lo = lo.min(t);
            hi = hi.max(t);
        }
        if !lo.is_finite() {
            return None;
        }
        if log {
            lo = lo.floor();
            hi = hi.ceil();
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        Some(Self { log, lo, hi })
    }

    fn frac(&self, v: f64) -> f64 {
        let t = if self.log { v.log10() } else { v };
        (t - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let step = ((self.hi - self.lo) / 8.0).ceil().max(1.0) as i32;
            (self.lo as i32..=self.hi as i32)
                .step_by(step as usize)
                .map(|e| (10f64.powi(e), format!("1e{e}")))
                .collect()
        } else {
            (0..=5)
                .map(|i| {
                    let v = self.lo + (self.hi - self.lo) * i as f64 / 5.0;
                    (v, format!("{v:.3}"))
                })
                .collect()
        }
    }
}

impl LinePlot {
    fn usable(&self, p: (f64, f64)) -> bool {
        p.0.is_finite()
            && p.1.is_finite()
            && (!self.log_x || p.0 > 0.0)
            && (!self.log_y || p.1 > 0.0)
    }

    pub fn to_svg(&self) -> Result<String> {
        let pts: Vec<Vec<(f64, f64)>> = self
            .series
            .iter()
            .map(|s| {
                s.points
                    .iter()
                    .copied()
                    .filter(|&p| self.usable(p))
                    .collect()
            })
            .collect();
        if pts.iter().all(Vec::is_empty) {
            return Err(Error::Degenerate("nothing to plot".into()));
        }
        let xa = Axis::fit(pts.iter().flatten().map(|p| p.0), self.log_x).unwrap();
        let ya = Axis::fit(pts.iter().flatten().map(|p| p.1), self.log_y).unwrap();
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let px = |x: f64| LEFT + xa.frac(x) * pw;
        let py = |y: f64| TOP + (1.0 - ya.frac(y)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for (v, label) in xa.ticks() {
            let x = px(v);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#dddddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"##,
                TOP + ph,
                TOP + ph + 18.0
            );
        }
        for (v, label) in ya.ticks() {
            let y = py(v);
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"##,
                LEFT + pw,
                LEFT - 6.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            H - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, (series, pts)) in self.series.iter().zip(&pts).enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            if !pts.is_empty() {
                let path: Vec<String> = pts
                    .iter()
                    .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                    .collect();
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.6" points="{}"/>"#,
                    path.join(" ")
                );
            }
            let ly = TOP + 10.0 + 20.0 * i as f64;
            let lx = W - RIGHT + 16.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                lx + 24.0,
                lx + 30.0,
                ly + 4.0,
                escape(&series.label)
            );
        }
        s.push_str("</svg>\n");
        Ok(s)
    }
}

/// Builds a plot from CSV text: the first column is `x`, every other column
/// is one series; empty or unparsable cells are skipped.
pub fn plot_from_csv(text: &str, title: &str, log_x: bool, log_y: bool) -> Result<LinePlot> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Degenerate(
            "CSV needs an x column and at least one series".into(),
        ));
    }
    let mut series: Vec<Series> = headers
        .iter()
        .skip(1)
        .map(|h| Series {
            label: h.to_string(),
            points: Vec::new(),
        })
        .collect();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        rows += 1;
        let Some(x) = rec.get(0).and_then(|v| v.trim().parse::<f64>().ok()) else {
            return Err(Error::Degenerate(format!("row {rows}: x is not a number")));
        };
        for (i, cell) in rec.iter().skip(1).enumerate() {
            if let Ok(y) = cell.trim().parse::<f64>() {
                series[i].points.push((x, y));
            }
        }
    }
    if rows == 0 {
        return Err(Error::Degenerate("CSV has no rows".into()));
    }
    Ok(LinePlot {
        title: title.to_string(),
        x_label: headers[0].to_string(),
        y_label: String::from("value"),
        log_x,
        log_y,
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "k,a,b\n1,1,0.5\n10,0.1,\n100,0.01,0.02\n";

    #[test]
    fn renders_every_series() {
        let p = plot_from_csv(CSV, "t <1>", true, true).unwrap();
        let svg = p.to_svg().unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("t &lt;1&gt;"));
        assert!(svg.contains(">a</text>") && svg.contains(">b</text>"));
        assert_eq!(
            svg,
            plot_from_csv(CSV, "t <1>", true, true)
                .unwrap()
                .to_svg()
                .unwrap()
        );
    }

    #[test]
    fn rejects_empty_inputs() {
        assert!(plot_from_csv("k,a\n", "x", true, true).is_err());
        assert!(plot_from_csv("k\n1\n", "x", true, true).is_err());
        assert!(plot_from_csv("k,a\nfoo,1\n", "x", true, true).is_err());
        let p = plot_from_csv("k,a\n1,0\n2,-1\n", "x", false, true).unwrap();
        assert!(p.to_svg().is_err());
    }

    #[test]
    fn linear_axes() {
        let p = plot_from_csv("x,y\n0,0\n1,1\n", "lin", false, false).unwrap();
        assert!(p.to_svg().unwrap().contains("0.000"));
    }
}
