//! Static SVG learning curves: lesson index against environment steps.

use std::fmt::Write as _;

use crate::error::{LabError, Result};
use crate::experiment::RunRow;

/// Two-sided 90% normal quantile.
pub const Z90: f64 = 1.645;
const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;
const GRID: usize = 200;

/// `(mean, half-width)` of the 90% band `mean ± 1.645·s/√n`, `s` the sample
/// standard deviation. A single value has no band.
pub fn confidence_band(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Z90 * var.sqrt() / n.sqrt())
}

/// Lesson progress of a run at `step`: the last row at or before it.
fn value_at(rows: &[RunRow], step: u64) -> f64 {
    let i = rows.partition_point(|r| r.step <= step);
    if i == 0 { 0.0 } else { rows[i - 1].lesson as f64 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandPoint {
    pub step: u64,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Mean curve and band over runs on an evenly spaced step grid.
pub fn aggregate(runs: &[Vec<RunRow>]) -> Result<Vec<BandPoint>> {
    let max = runs.iter().filter_map(|r| r.last()).map(|r| r.step).max().ok_or(LabError::EmptyLog)?;
    Ok((0..=GRID)
        .map(|g| {
            let step = max * g as u64 / GRID as u64;
            let vals: Vec<f64> = runs.iter().map(|r| value_at(r, step)).collect();
            let (mean, hw) = confidence_band(&vals);
            BandPoint {
                step,
                mean,
                lo: mean - hw,
                hi: mean + hw,
            }
        })
        .collect())
}

/// One polyline per run, plus the mean and its band when there are
/// several runs.
pub fn lesson_curves_svg(title: &str, runs: &[Vec<RunRow>]) -> Result<String> {
    if runs.is_empty() || runs.iter().all(Vec::is_empty) {
        return Err(LabError::EmptyLog);
    }
    let max_step = runs.iter().filter_map(|r| r.last()).map(|r| r.step).max().unwrap_or(1).max(1) as f64;
    let max_lesson = runs.iter().flatten().map(|r| r.lesson).max().unwrap_or(0).max(1) as f64;
    let x = |s: f64| PAD + (W - 2.0 * PAD) * s / max_step;
    let y = |l: f64| H - PAD - (H - 2.0 * PAD) * l / max_lesson;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<path d="M{PAD} {PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{max_step}</text>"#, W - PAD, H - PAD + 16.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{max_lesson}</text>"#, PAD - 4.0, PAD + 4.0);

    if runs.len() > 1 {
        let pts = aggregate(runs)?;
        let mut band = String::new();
        for p in &pts {
            let _ = write!(band, "{:.2},{:.2} ", x(p.step as f64), y(p.hi));
        }
        for p in pts.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", x(p.step as f64), y(p.lo));
        }
        let _ = writeln!(svg, r##"<polygon class="band" points="{}" fill="#1f77b4" fill-opacity="0.2" stroke="none"/>"##, band.trim_end());
        let mean: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", x(p.step as f64), y(p.mean))).collect();
        let _ = writeln!(svg, r##"<polyline class="mean" points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##, mean.join(" "));
    }
    for run in runs.iter().filter(|r| !r.is_empty()) {
        let mut pts = vec![format!("{:.2},{:.2}", x(0.0), y(0.0))];
        let mut prev = 0.0;
        for r in run {
            let l = r.lesson as f64;
            if l != prev {
                pts.push(format!("{:.2},{:.2}", x(r.step as f64), y(prev)));
                prev = l;
            }
            pts.push(format!("{:.2},{:.2}", x(r.step as f64), y(l)));
        }
        let _ = writeln!(svg, r##"<polyline class="run" points="{}" fill="none" stroke="#888888" stroke-width="1"/>"##, pts.join(" "));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Scatter of a 2-D projection, coloured by label index.
pub fn scatter_svg(title: &str, points: &[[f64; 2]], labels: &[usize]) -> String {
    const COLORS: [&str; 3] = ["#2ca02c", "#1f77b4", "#d62728"];
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in points {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let sx = (x1 - x0).max(1e-12);
    let sy = (y1 - y0).max(1e-12);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{H}" height="{H}" viewBox="0 0 {H} {H}">"#);
    let _ = writeln!(svg, r#"<rect width="{H}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#, H / 2.0, escape(title));
    for (p, &l) in points.iter().zip(labels) {
        let cx = PAD + (H - 2.0 * PAD) * (p[0] - x0) / sx;
        let cy = H - PAD - (H - 2.0 * PAD) * (p[1] - y0) / sy;
        let _ = writeln!(svg, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="2" fill="{}"/>"#, COLORS[l % COLORS.len()]);
    }
    svg.push_str("</svg>\n");
    svg
}
