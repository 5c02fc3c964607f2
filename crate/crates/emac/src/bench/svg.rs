//! Minimal static SVG line charts for the diagnostic series.

use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;

/// Renders one chart with a polyline and legend entry per series, linear
/// axes with tick labels, and a title. An empty series list still produces
/// the axes.
pub fn plot_series(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let svg = render(title, x_label, y_label, series);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(svg.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn render(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    use std::fmt::Write as _;

    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            if x.is_finite() && y.is_finite() {
                xmin = xmin.min(x);
                xmax = xmax.max(x);
                ymin = ymin.min(y);
                ymax = ymax.max(y);
            }
        }
    }
    if !xmin.is_finite() {
        (xmin, xmax, ymin, ymax) = (0.0, 1.0, 0.0, 1.0);
    }
    if xmax == xmin {
        xmax = xmin + 1.0;
    }
    if ymax == ymin {
        // flat series: pad symmetrically so the line sits mid-plot
        let pad = if ymin == 0.0 { 1.0 } else { ymin.abs() * 0.1 };
        ymin -= pad;
        ymax += pad;
    }

    let px = |x: f64| MARGIN_L + (x - xmin) / (xmax - xmin) * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |y: f64| HEIGHT - MARGIN_B - (y - ymin) / (ymax - ymin) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="18" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        xml_escape(title)
    );

    // axes
    let _ = writeln!(
        out,
        r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="black"/>"#,
        MARGIN_L,
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R
    );
    let _ = writeln!(
        out,
        r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="black"/>"#,
        MARGIN_L,
        MARGIN_T,
        HEIGHT - MARGIN_B
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = xmin + f * (xmax - xmin);
        let yv = ymin + f * (ymax - ymin);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
            px(xv),
            HEIGHT - MARGIN_B + 16.0,
            format_tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
            MARGIN_L - 6.0,
            py(yv) + 3.0,
            format_tick(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 10.0,
        xml_escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        xml_escape(y_label)
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts = String::new();
        for &(x, y) in &s.points {
            if x.is_finite() && y.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", px(x), py(y));
            }
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.trim_end()
        );
        let ly = MARGIN_T + 16.0 * i as f64 + 10.0;
        let _ = writeln!(
            out,
            r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            WIDTH - MARGIN_R + 10.0,
            WIDTH - MARGIN_R + 34.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            WIDTH - MARGIN_R + 40.0,
            ly + 4.0,
            xml_escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 0.01 && v.abs() < 10000.0 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
