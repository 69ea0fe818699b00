//! Minimal deterministic SVG line charts for the benchmark plots.
//!
//! Hand-rolled on purpose: output bytes must be identical across runs, and
//! the charts only need polylines, axes, and a legend.

use std::fmt::Write;

pub struct Series {
    pub label: String,
    pub color: &'static str,
    /// (x, y); `None` y-values (diverged epochs) break the line.
    pub points: Vec<(f64, Option<f64>)>,
}

pub struct Panel {
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 760.0;
const PANEL_HEIGHT: f64 = 270.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 34.0;
const MARGIN_BOTTOM: f64 = 40.0;

pub const PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

fn transform(v: f64, log: bool) -> f64 {
    if log {
        v.max(1e-12).log10()
    } else {
        v
    }
}

fn format_tick(v: f64, log: bool) -> String {
    let raw = if log { 10f64.powf(v) } else { v };
    if raw == 0.0 {
        "0".into()
    } else if raw.abs() >= 0.01 && raw.abs() < 1000.0 {
        format!("{raw:.3}")
    } else {
        format!("{raw:.2e}")
    }
}

fn render_panel(out: &mut String, panel: &Panel, x_max: f64, y_offset: f64, x_label: Option<&str>) {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = PANEL_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;

    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in &panel.series {
        for &(_, y) in &s.points {
            if let Some(y) = y {
                let t = transform(y, panel.log_y);
                y_min = y_min.min(t);
                y_max = y_max.max(t);
            }
        }
    }
    if !y_min.is_finite() || !y_max.is_finite() {
        y_min = 0.0;
        y_max = 1.0;
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;

    let to_x = |x: f64| MARGIN_LEFT + x / x_max.max(1.0) * plot_w;
    let to_y = |y: f64| y_offset + MARGIN_TOP + (y_max - y) / (y_max - y_min) * plot_h;

    // Frame and gridlines at quarter heights.
    let _ = writeln!(
        out,
        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{plot_w:.2}\" height=\"{plot_h:.2}\" fill=\"none\" stroke=\"#999\"/>",
        MARGIN_LEFT,
        y_offset + MARGIN_TOP
    );
    for k in 0..=4 {
        let frac = k as f64 / 4.0;
        let yv = y_min + frac * (y_max - y_min);
        let y = to_y(yv);
        if k > 0 && k < 4 {
            let _ = writeln!(
                out,
                "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#ddd\"/>",
                MARGIN_LEFT,
                MARGIN_LEFT + plot_w
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{}</text>",
            MARGIN_LEFT - 6.0,
            y + 4.0,
            format_tick(yv, panel.log_y)
        );
    }
    // X ticks at quarters.
    for k in 0..=4 {
        let xv = x_max * k as f64 / 4.0;
        let x = to_x(xv);
        let _ = writeln!(
            out,
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{:.0}</text>",
            y_offset + MARGIN_TOP + plot_h + 16.0,
            xv
        );
    }
    if let Some(label) = x_label {
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">{label}</text>",
            MARGIN_LEFT + plot_w / 2.0,
            y_offset + MARGIN_TOP + plot_h + 34.0
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"16\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>",
        y_offset + MARGIN_TOP + plot_h / 2.0,
        y_offset + MARGIN_TOP + plot_h / 2.0,
        panel.y_label
    );

    // Series: split polylines on missing points.
    for s in &panel.series {
        let mut segment: Vec<String> = Vec::new();
        let flush = |seg: &mut Vec<String>, out: &mut String| {
            if seg.len() >= 2 {
                let _ = writeln!(
                    out,
                    "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.6\" points=\"{}\"/>",
                    s.color,
                    seg.join(" ")
                );
            }
            seg.clear();
        };
        for &(x, y) in &s.points {
            match y {
                Some(y) => segment.push(format!(
                    "{:.2},{:.2}",
                    to_x(x),
                    to_y(transform(y, panel.log_y))
                )),
                None => flush(&mut segment, out),
            }
        }
        flush(&mut segment, out);
    }

    // Legend on the right margin.
    for (i, s) in panel.series.iter().enumerate() {
        let y = y_offset + MARGIN_TOP + 14.0 * i as f64 + 8.0;
        let x = MARGIN_LEFT + plot_w + 12.0;
        let _ = writeln!(
            out,
            "<line x1=\"{x:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{}\" stroke-width=\"2\"/>",
            x + 18.0,
            s.color
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{}</text>",
            x + 24.0,
            y + 4.0,
            s.label
        );
    }
}

/// Render a two-panel chart (shared x axis) to an SVG string.
pub fn two_panel_chart(title: &str, x_label: &str, x_max: f64, top: &Panel, bottom: &Panel) -> String {
    let height = 2.0 * PANEL_HEIGHT + 20.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {WIDTH:.0} {height:.0}\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"20\" font-size=\"14\" text-anchor=\"middle\" font-weight=\"bold\">{title}</text>",
        WIDTH / 2.0
    );
    render_panel(&mut out, top, x_max, 10.0, None);
    render_panel(&mut out, bottom, x_max, 10.0 + PANEL_HEIGHT, Some(x_label));
    out.push_str("</svg>\n");
    out
}
