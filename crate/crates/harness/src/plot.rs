//! Deterministic SVG rendering of success-probability curves.

use std::fmt::Write as _;

use crate::{fmt_sig, HarnessError};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = 64.0;

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

#[derive(Debug, Clone)]
pub struct PlotSeries {
    pub label: String,
    /// `(β, success rate)` vertices, in plotting order.
    pub points: Vec<(f64, f64)>,
}

/// Renders one polyline per series with markers, fixed axes `y ∈ [0, 1]`
/// and `x ∈ [0, max β]`, and the control-parameter axis labels. Output
/// bytes depend only on the input.
pub fn render_plot(series: &[PlotSeries]) -> Result<String, HarnessError> {
    if series.iter().all(|s| s.points.is_empty()) {
        return Err(HarnessError::Plot("no points to plot".into()));
    }
    let x_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold(0.0f64, f64::max)
        .max(1e-9)
        * 1.05;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + x / x_max * plot_w;
    let py = |y: f64| TOP + (1.0 - y) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);

    // horizontal grid and y ticks
    for i in 0..=4 {
        let y = i as f64 * 0.25;
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#dddddd" stroke-width="1"/>"##,
            px(0.0),
            py(y),
            px(x_max),
            py(y)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            py(y) + 4.0,
            fmt_sig(y)
        );
    }
    // x ticks at the distinct β values
    let mut xs: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    for &x in &xs {
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#999999" stroke-width="1"/>"##,
            px(x),
            py(0.0),
            px(x),
            py(0.0) + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            px(x),
            py(0.0) + 20.0,
            fmt_sig(x)
        );
    }
    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="1.5"/>"#,
        px(0.0),
        py(0.0),
        px(x_max),
        py(0.0)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="1.5"/>"#,
        px(0.0),
        py(0.0),
        px(0.0),
        py(1.0)
    );
    // axis labels
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="14" text-anchor="middle">β = n/[20 d log p]</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="14" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">P[Ê = E*]</text>"#,
        20.0,
        TOP + plot_h / 2.0,
        20.0,
        TOP + plot_h / 2.0
    );

    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        if s.points.len() > 1 {
            let vertices: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
                vertices.join(" "),
                color
            );
        }
        for &(x, y) in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{}"/>"#,
                px(x),
                py(y),
                color
            );
        }
        // legend entry
        let ly = TOP + 8.0 + 18.0 * idx as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{:.2}" y="{:.2}" width="14" height="4" fill="{}"/>"#,
            LEFT + plot_w - 110.0,
            ly - 4.0,
            color
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{}</text>"#,
            LEFT + plot_w - 90.0,
            ly,
            s.label
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
