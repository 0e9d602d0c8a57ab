//! Tables (CSV or JSON) and minimal SVG figures.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::cli::Format;

/// A header row plus typed cells; written as CSV or as a JSON array of
/// objects keyed by header.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &'static str, headers: &[&str]) -> Self {
        Self { name, headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path, format: Format) -> Result<PathBuf> {
        let path = dir.join(format!("{}.{}", self.name, extension(format)));
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
                w.write_record(&self.headers)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(cell_text))?;
                }
                w.flush()?;
            }
            Format::Json => {
                let records: Vec<Map<String, Value>> = self
                    .rows
                    .iter()
                    .map(|row| self.headers.iter().cloned().zip(row.iter().cloned()).collect())
                    .collect();
                write_json(&path, &records)?;
            }
        }
        Ok(path)
    }
}

fn extension(format: Format) -> &'static str {
    match format {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

fn cell_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// A JSON number, or null for non-finite values.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

pub fn text(s: impl Into<String>) -> Value {
    Value::String(s.into())
}

/// `mean (sd)` with three decimals.
pub fn mean_sd(mean: f64, sd: f64) -> Value {
    text(format!("{mean:.3} ({sd:.3})"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Plot {
    Line,
    Scatter,
}

const W: f64 = 480.0;
const H: f64 = 360.0;
const MARGIN: f64 = 50.0;

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// A self-contained SVG with axes, extreme-value tick labels and the points.
pub fn svg(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)], plot: Plot) -> String {
    let finite: Vec<(f64, f64)> = points.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
    let (x0, x1) = span(finite.iter().map(|p| p.0));
    let (y0, y1) = span(finite.iter().map(|p| p.1));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, W / 2.0, escape(title));
    let (left, right, top, bottom) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
    let _ = writeln!(s, r#"<path d="M{left} {top} V{bottom} H{right}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{left}" y="{}" text-anchor="middle">{}</text>"#, bottom + 15.0, fmt_tick(x0));
    let _ = writeln!(s, r#"<text x="{right}" y="{}" text-anchor="middle">{}</text>"#, bottom + 15.0, fmt_tick(x1));
    let _ = writeln!(s, r#"<text x="{}" y="{bottom}" text-anchor="end">{}</text>"#, left - 4.0, fmt_tick(y0));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, left - 4.0, top + 4.0, fmt_tick(y1));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    match plot {
        Plot::Line => {
            let path: Vec<String> = finite.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#, path.join(" "));
        }
        Plot::Scatter => {
            for &(x, y) in &finite {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="steelblue" fill-opacity="0.7"/>"#, sx(x), sy(y));
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
