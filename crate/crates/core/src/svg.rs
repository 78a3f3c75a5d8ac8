// SPDX-License-Identifier: Apache-2.0

//! Scatter plot of an embedding: cluster members as coloured dots, noise as
//! black crosses. Output depends only on the input values.

use std::fmt::Write;

use crate::cluster::Label;
use crate::embed::Point;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 24.0;
const RADIUS: f64 = 3.5;
const CROSS: f64 = 4.5;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22",
    "#7f7f7f", "#d62728",
];

pub fn render_svg(points: &[Point], labels: &[Label]) -> String {
    let bounds = |d: usize| {
        let lo = points.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[d]).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let (x0, x1) = bounds(0);
    let (y0, y1) = bounds(1);
    let span = (x1 - x0).max(y1 - y0);
    let scale = if span > 0.0 {
        (WIDTH - 2.0 * MARGIN).min(HEIGHT - 2.0 * MARGIN) / span
    } else {
        0.0
    };
    let cx = 0.5 * (x0 + x1);
    let cy = 0.5 * (y0 + y1);
    let project = |p: &Point| {
        (
            WIDTH / 2.0 + (p[0] - cx) * scale,
            HEIGHT / 2.0 - (p[1] - cy) * scale,
        )
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    // Noise is drawn last so crosses sit on top.
    for (p, label) in points.iter().zip(labels) {
        if let Some(c) = label {
            let (x, y) = project(p);
            let _ = writeln!(
                out,
                r#"<circle class="cluster-{c}" cx="{x:.2}" cy="{y:.2}" r="{RADIUS}" fill="{}" fill-opacity="0.8"/>"#,
                PALETTE[c % PALETTE.len()]
            );
        }
    }
    for (p, label) in points.iter().zip(labels) {
        if label.is_none() {
            let (x, y) = project(p);
            let _ = writeln!(
                out,
                r#"<path class="noise" d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}" stroke="black" stroke-width="1.5"/>"#,
                x - CROSS, y - CROSS, x + CROSS, y + CROSS, x - CROSS, y + CROSS, x + CROSS, y - CROSS
            );
        }
    }
    out.push_str("</svg>\n");
    out
}
