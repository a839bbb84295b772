//! Static SVG trade-off plots: fit time versus relative error on log-log
//! axes, one series per model configuration, one marker per sample budget.
//!
//! Output is built from sorted keys with fixed-precision coordinates, so a
//! given summary always produces byte-identical SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::runner::SummaryRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 156.0;
const MARGIN_TOP: f64 = 24.0;
const MARGIN_BOTTOM: f64 = 48.0;

const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#393b79", "#ad494a",
];

/// Render a summary as an SVG document. An empty (or all-failed) summary
/// yields axes only.
pub fn emit_plot(rows: &[SummaryRow]) -> String {
    let usable: Vec<&SummaryRow> = rows
        .iter()
        .filter(|r| {
            r.mean_fit_seconds.is_finite()
                && r.mean_re.is_finite()
                && r.mean_fit_seconds > 0.0
                && r.mean_re > 0.0
        })
        .collect();

    // log-log extents, padded to the surrounding decades
    let (x_lo, x_hi, y_lo, y_hi) = if usable.is_empty() {
        (-2.0, 2.0, -4.0, 0.0)
    } else {
        let mut x_lo = f64::INFINITY;
        let mut x_hi = f64::NEG_INFINITY;
        let mut y_lo = f64::INFINITY;
        let mut y_hi = f64::NEG_INFINITY;
        for r in &usable {
            x_lo = x_lo.min(r.mean_fit_seconds.log10());
            x_hi = x_hi.max(r.mean_fit_seconds.log10());
            y_lo = y_lo.min(r.mean_re.log10());
            y_hi = y_hi.max(r.mean_re.log10());
        }
        (
            x_lo.floor(),
            (x_hi.ceil()).max(x_lo.floor() + 1.0),
            y_lo.floor(),
            (y_hi.ceil()).max(y_lo.floor() + 1.0),
        )
    };

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |lx: f64| MARGIN_LEFT + (lx - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |ly: f64| MARGIN_TOP + (y_hi - ly) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);

    // frame
    let _ = writeln!(
        svg,
        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black" stroke-width="1"/>"#,
        MARGIN_LEFT, MARGIN_TOP, plot_w, plot_h
    );

    // decade ticks and gridlines
    let mut lx = x_lo;
    while lx <= x_hi + 1e-9 {
        let x = px(lx);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#dddddd" stroke-width="0.5"/>"##,
            MARGIN_TOP,
            MARGIN_TOP + plot_h
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="middle" font-family="sans-serif">1e{}</text>"#,
            MARGIN_TOP + plot_h + 16.0,
            lx as i64
        );
        lx += 1.0;
    }
    let mut ly = y_lo;
    while ly <= y_hi + 1e-9 {
        let y = py(ly);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd" stroke-width="0.5"/>"##,
            MARGIN_LEFT,
            MARGIN_LEFT + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end" font-family="sans-serif">1e{}</text>"#,
            MARGIN_LEFT - 6.0,
            y + 4.0,
            ly as i64
        );
        ly += 1.0;
    }

    // axis labels
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle" font-family="sans-serif">fit time [s]</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" font-size="13" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 16 {:.2})">relative error</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );

    // series grouped by (model, h, m), points ordered by sample count
    let mut series: BTreeMap<String, Vec<&SummaryRow>> = BTreeMap::new();
    for r in &usable {
        series.entry(series_label(r)).or_default().push(r);
    }
    for (idx, (label, mut pts)) in series.into_iter().enumerate() {
        pts.sort_by_key(|r| r.n);
        let color = PALETTE[idx % PALETTE.len()];
        if pts.len() > 1 {
            let path: Vec<String> = pts
                .iter()
                .map(|r| {
                    format!(
                        "{:.2},{:.2}",
                        px(r.mean_fit_seconds.log10()),
                        py(r.mean_re.log10())
                    )
                })
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                path.join(" ")
            );
        }
        for r in &pts {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#,
                px(r.mean_fit_seconds.log10()),
                py(r.mean_re.log10())
            );
        }
        // legend entry
        let ly = MARGIN_TOP + 10.0 + idx as f64 * 16.0;
        let lx0 = WIDTH - MARGIN_RIGHT + 10.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx0:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx0 + 18.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" font-family="sans-serif">{label}</text>"#,
            lx0 + 24.0,
            ly + 4.0
        );
    }

    svg.push_str("</svg>\n");
    svg
}

fn series_label(r: &SummaryRow) -> String {
    match r.model.as_str() {
        "kpls" | "kplsk" => format!("{} h{}", r.model, r.h),
        "gekpls" => format!("gekpls{} h{}", r.m, r.h),
        other => other.to_string(),
    }
}
