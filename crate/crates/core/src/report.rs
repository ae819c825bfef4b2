//! CSV reports and a small static SVG renderer.
//!
//! Reports contain no timestamps or timings, so a rerun with the same seed
//! writes identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::probe::{ClassificationReport, CorrelationReport};
use crate::search::Comparison;

/// Serializes `rows` with a header line taken from the field names.
pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    std::fs::write(path, csv_bytes(rows)?)?;
    Ok(())
}

/// One probe result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub attribute: String,
    pub t_prefix: usize,
    pub leak_prob: f64,
    pub kendall: f64,
    pub spearman: f64,
    pub pearson: f64,
    pub n: usize,
}

impl CorrelationRow {
    pub fn new(attribute: &str, t_prefix: usize, leak_prob: f64, c: &CorrelationReport) -> Self {
        Self {
            attribute: attribute.to_string(),
            t_prefix,
            leak_prob,
            kendall: c.kendall,
            spearman: c.spearman,
            pearson: c.pearson,
            n: c.n,
        }
    }
}

/// Confusion matrix with a `true` column followed by one column per predicted class.
pub fn confusion_csv(report: &ClassificationReport) -> Result<Vec<u8>> {
    let k = report.confusion.len();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["true".to_string()];
    header.extend((0..k).map(|c| format!("pred_{c}")));
    w.write_record(&header)?;
    for (t, row) in report.confusion.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ComparisonRow<'a> {
    a: &'a str,
    b: &'a str,
    /// 0 for all prompts.
    event_count: usize,
    n: usize,
    mean_a: f64,
    mean_b: f64,
    gap: f64,
    wins: u64,
    losses: u64,
    ties: u64,
    p_value: f64,
}

/// Overall row (event_count 0, with the sign test) then one row per bucket.
/// Sign-test columns are left at the overall values on bucket rows.
pub fn comparison_csv(c: &Comparison) -> Result<Vec<u8>> {
    let row = |event_count, n, mean_a, mean_b| ComparisonRow {
        a: &c.a,
        b: &c.b,
        event_count,
        n,
        mean_a,
        mean_b,
        gap: mean_a - mean_b,
        wins: c.sign.wins,
        losses: c.sign.losses,
        ties: c.sign.ties,
        p_value: c.sign.p_value,
    };
    let mut rows = vec![row(0, c.n, c.mean_a, c.mean_b)];
    rows.extend(c.buckets.iter().map(|b| row(b.event_count, b.n, b.mean_a, b.mean_b)));
    csv_bytes(&rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Line,
    Points,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub mark: Mark,
}

impl Series {
    pub fn line(name: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.to_string(),
            points,
            mark: Mark::Line,
        }
    }

    pub fn scatter(name: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.to_string(),
            points,
            mark: Mark::Points,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            series: Vec::new(),
        }
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    /// Static SVG with axes, four ticks per axis and a legend. Non-finite
    /// points are skipped.
    pub fn to_svg(&self) -> String {
        let pts = || self.series.iter().flat_map(|s| s.points.iter());
        let (x0, x1) = range(pts().map(|p| p.0));
        let (y0, y1) = range(pts().map(|p| p.1));
        let (pw, ph) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * ph;

        let mut o = String::new();
        let _ = writeln!(
            o,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(o, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            o,
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            o,
            r#"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let (px, py) = (sx(xv), sy(yv));
            let _ = writeln!(
                o,
                r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                HEIGHT - MARGIN + 16.0,
                tick(xv)
            );
            let _ = writeln!(
                o,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                MARGIN - 6.0,
                py + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            o,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            o,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.y_label)
        );
        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let finite = s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite());
            match s.mark {
                Mark::Line => {
                    let path: Vec<String> = finite.map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
                    let _ = writeln!(
                        o,
                        r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                        path.join(" ")
                    );
                }
                Mark::Points => {
                    for &(x, y) in finite {
                        let _ = writeln!(
                            o,
                            r#"<circle cx="{:.1}" cy="{:.1}" r="2" fill="{color}" fill-opacity="0.6"/>"#,
                            sx(x),
                            sy(y)
                        );
                    }
                }
            }
            let ly = MARGIN + 14.0 + 16.0 * k as f64;
            let lx = WIDTH - MARGIN - 150.0;
            let _ = writeln!(
                o,
                r#"<rect x="{lx:.1}" y="{:.1}" width="10" height="10" fill="{color}"/><text x="{:.1}" y="{ly:.1}">{}</text>"#,
                ly - 9.0,
                lx + 14.0,
                escape(&s.name)
            );
        }
        o.push_str("</svg>\n");
        o
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_svg())?;
        Ok(())
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}
