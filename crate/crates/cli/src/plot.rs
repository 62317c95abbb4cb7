//! Standalone SVG charts of result CSVs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    /// Efficiency against the number of snapshots.
    Gamma,
    /// Covariance eigenvalues against their index.
    Spectrum,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 55.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

struct Series {
    label: String,
    x: Vec<f64>,
    y: Vec<f64>,
    spread: Option<Vec<f64>>,
}

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.headers.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let headers: Vec<String> = reader
        .headers()
        .with_context(|| format!("{}:1: unreadable header", path.display()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.iter().all(|h| h.is_empty()) {
        bail!("{}: empty CSV", path.display());
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            anyhow!("{}:{line}: {e}", path.display())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row = record
            .iter()
            .zip(&headers)
            .map(|(field, name)| {
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| anyhow!("{}:{line}: column `{name}` has non-numeric value {field:?}", path.display()))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{}: CSV has a header but no data rows", path.display());
    }
    Ok(Table { headers, rows })
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn capitalized(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn gamma_series(path: &Path, table: &Table, prefix: bool) -> Result<Vec<Series>> {
    let x = table
        .column("t")
        .ok_or_else(|| anyhow!("{}:1: missing column `t`", path.display()))?;
    let mut out = Vec::new();
    for name in &table.headers {
        let (label, spread) = if let Some(algo) = name.strip_prefix("mean_") {
            (capitalized(algo), table.column(&format!("std_{algo}")))
        } else if name == "gamma" {
            (stem(path), None)
        } else {
            continue;
        };
        let label = if prefix { format!("{label} ({})", stem(path)) } else { label };
        out.push(Series { label, x: x.clone(), y: table.column(name).expect("header exists"), spread });
    }
    if out.is_empty() {
        bail!("{}:1: no `mean_*` or `gamma` column to plot", path.display());
    }
    Ok(out)
}

fn spectrum_series(path: &Path, table: &Table) -> Result<Series> {
    let missing = |c: &str| anyhow!("{}:1: missing column `{c}`", path.display());
    Ok(Series {
        label: stem(path),
        x: table.column("index").ok_or_else(|| missing("index"))?,
        y: table.column("eigenvalue").ok_or_else(|| missing("eigenvalue"))?,
        spread: None,
    })
}

/// Round tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 7.0).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn svg(series: &[Series], kind: Kind) -> String {
    let all_x = series.iter().flat_map(|s| s.x.iter().copied());
    let (x_lo, x_hi) = all_x.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (mut y_lo, mut y_hi) = series
        .iter()
        .flat_map(|s| s.y.iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if kind == Kind::Gamma {
        y_lo = y_lo.min(0.0);
        y_hi = y_hi.max(1.0);
    } else {
        y_lo = y_lo.min(0.0);
    }
    let (x_hi, y_hi) = (if x_hi > x_lo { x_hi } else { x_lo + 1.0 }, if y_hi > y_lo { y_hi } else { y_lo + 1.0 });
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |y: f64| TOP + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for t in ticks(x_lo, x_hi) {
        let x = px(t);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ccc"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP,
            TOP + plot_h,
            TOP + plot_h + 16.0,
            fmt_tick(t)
        );
    }
    for t in ticks(y_lo, y_hi) {
        let y = py(t);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ccc"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let (x_label, y_label) = match kind {
        Kind::Gamma => ("Number of sequential training samples", "Estimation efficiency"),
        Kind::Spectrum => ("Index", "Eigenvalue"),
    };
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{y_label}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        if let Some(spread) = &s.spread {
            let upper = s.x.iter().zip(&s.y).zip(spread).map(|((&x, &y), &d)| (px(x), py(y + d)));
            let lower = s.x.iter().zip(&s.y).zip(spread).rev().map(|((&x, &y), &d)| (px(x), py(y - d)));
            let points: Vec<String> = upper.chain(lower).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(out, r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#, points.join(" "));
        }
        let points: Vec<String> = s.x.iter().zip(&s.y).map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            points.join(" ")
        );
        if kind == Kind::Spectrum {
            for (&x, &y) in s.x.iter().zip(&s.y) {
                let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x), py(y));
            }
        }
        let ly = TOP + 14.0 + 20.0 * i as f64;
        let lx = LEFT + plot_w + 14.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2.5"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 22.0,
            lx + 28.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn render(paths: &[PathBuf], out: &Path, kind: Kind) -> Result<()> {
    let mut series = Vec::new();
    for path in paths {
        let table = read_table(path)?;
        match kind {
            Kind::Gamma => series.extend(gamma_series(path, &table, paths.len() > 1)?),
            Kind::Spectrum => series.push(spectrum_series(path, &table)?),
        }
    }
    std::fs::write(out, svg(&series, kind)).with_context(|| format!("cannot write {}", out.display()))?;
    println!("{}", out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_and_inside() {
        let t = ticks(0.0, 400.0);
        assert_eq!(t.first(), Some(&0.0));
        assert_eq!(t.last(), Some(&400.0));
        assert!(t.len() >= 4 && t.len() <= 8);
        let t = ticks(0.2, 0.9);
        assert!(t.iter().all(|&v| (0.2..=0.9).contains(&v)));
    }

    #[test]
    fn labels_are_capitalized() {
        assert_eq!(capitalized("adaptive"), "Adaptive");
        assert_eq!(capitalized(""), "");
    }
}
