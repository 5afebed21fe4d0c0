//! Deterministic SVG scatter plots of two- or three-column point tables.
//! A third column colors points on a blue-to-red ramp.

use std::fmt::Write as _;
use std::path::Path;

use crate::datasets::{csv_read_path, Table};
use crate::error::{Error, Result};
use crate::numlin::Matrix;

pub const CANVAS: f64 = 800.0;
pub const POINT_RADIUS: f64 = 2.0;
const MARGIN: f64 = 70.0;
const TARGET_TICKS: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Axis {
    lo: f64,
    hi: f64,
    step: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (-1.0, 1.0);
        } else if hi - lo <= 1e-12 * lo.abs().max(1.0) {
            (lo, hi) = (lo - 1.0, hi + 1.0);
        }
        let step = nice_step((hi - lo) / TARGET_TICKS);
        Axis { lo: (lo / step).floor() * step, hi: (hi / step).ceil() * step, step }
    }

    fn ticks(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step).round() as i64;
        (0..=n).map(|i| self.lo + i as f64 * self.step).collect()
    }

    /// Position along [0, 1].
    fn unit(&self, v: f64) -> f64 {
        (v - self.lo) / (self.hi - self.lo)
    }

    fn label(&self, v: f64) -> String {
        let decimals = (-self.step.log10().floor()).max(0.0) as usize;
        let s = format!("{v:.decimals$}");
        if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
            format!("{:.decimals$}", 0.0)
        } else {
            s
        }
    }
}

/// Smallest of {1, 2, 5}·10^k that is at least `raw`.
fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn ramp(t: f64) -> (u8, u8, u8) {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.5 };
    let r = (40.0 + 200.0 * t).round() as u8;
    let b = (240.0 - 200.0 * t).round() as u8;
    (r, 70, b)
}

/// Renders an SVG scatter of the rows of `points` (N×2 or N×3).
pub fn scatter_svg(points: &Matrix, x_label: &str, y_label: &str) -> Result<String> {
    if points.cols() != 2 && points.cols() != 3 {
        return Err(Error::dim(format!("scatter needs 2 or 3 columns, got {}", points.cols())));
    }
    let n = points.rows();
    let ax = Axis::fit((0..n).map(|i| points[(i, 0)]));
    let ay = Axis::fit((0..n).map(|i| points[(i, 1)]));
    let span = CANVAS - 2.0 * MARGIN;
    let px = |v: f64| MARGIN + ax.unit(v) * span;
    let py = |v: f64| CANVAS - MARGIN - ay.unit(v) * span;

    let mut s = String::new();
    let w = CANVAS as u32;
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{w}" viewBox="0 0 {w} {w}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{w}" fill="white"/>"#);
    let _ = writeln!(s, r#"<g stroke="black" stroke-width="1" font-family="sans-serif" font-size="12">"#);
    let (x0, x1, y0, y1) = (MARGIN, CANVAS - MARGIN, CANVAS - MARGIN, MARGIN);
    let _ = writeln!(s, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}"/>"#);
    for t in ax.ticks() {
        let x = px(t);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}"/><text x="{x:.2}" y="{:.2}" text-anchor="middle" stroke="none">{}</text>"#,
            y0 + 6.0,
            y0 + 22.0,
            ax.label(t)
        );
    }
    for t in ay.ticks() {
        let y = py(t);
        let _ = writeln!(
            s,
            r#"<line x1="{x0:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}"/><text x="{:.2}" y="{:.2}" text-anchor="end" stroke="none">{}</text>"#,
            x0 - 6.0,
            x0 - 10.0,
            y + 4.0,
            ay.label(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" stroke="none">{}</text>"#,
        CANVAS / 2.0,
        CANVAS - 20.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" stroke="none" transform="rotate(-90 20 {:.2})">{}</text>"#,
        CANVAS / 2.0,
        CANVAS / 2.0,
        escape(y_label)
    );
    let _ = writeln!(s, "</g>");

    let color = if points.cols() == 3 {
        let ac = Axis::fit((0..n).map(|i| points[(i, 2)]));
        Some(move |v: f64| ramp(ac.unit(v)))
    } else {
        None
    };
    let _ = writeln!(s, r#"<g stroke="none" fill-opacity="0.7">"#);
    for i in 0..n {
        let (r, g, b) = match &color {
            Some(c) => c(points[(i, 2)]),
            None => (40, 70, 240),
        };
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="{POINT_RADIUS}" fill="#{r:02x}{g:02x}{b:02x}"/>"##,
            px(points[(i, 0)]),
            py(points[(i, 1)])
        );
    }
    let _ = writeln!(s, "</g>\n</svg>");
    Ok(s)
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Scatter of a CSV table; axis titles come from its header.
pub fn plot_table(table: &Table) -> Result<String> {
    let name = |j: usize| table.columns.get(j).cloned().unwrap_or_default();
    scatter_svg(&table.data, &name(0), &name(1))
}

pub fn plot_csv_path(input: impl AsRef<Path>, output: impl AsRef<Path>) -> Result<()> {
    let table = csv_read_path(input)?;
    let svg = plot_table(&table)?;
    std::fs::write(output, svg)?;
    Ok(())
}
