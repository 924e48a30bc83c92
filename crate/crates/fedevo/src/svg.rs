//! Minimal SVG scatter plots with 2σ covariance ellipses.

use std::fmt::Write as _;

/// One cluster drawn as a 2σ ellipse: center and 2×2 covariance, both in
/// data coordinates.
#[derive(Debug, Clone, Copy)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub cov: [[f64; 2]; 2],
}

const PALETTE: &[&str] = &[
    "#3366cc", "#dc3912", "#ff9900", "#109618", "#990099", "#0099c6", "#dd4477", "#66aa00",
];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 40.0;

/// Eigenvalues and rotation angle of a symmetric 2×2 matrix; the angle is
/// the direction of the major axis in data coordinates.
fn eigen2(m: [[f64; 2]; 2]) -> (f64, f64, f64) {
    let (a, b, c) = (m[0][0], m[0][1], m[1][1]);
    let half_trace = (a + c) / 2.0;
    let r = (((a - c) / 2.0).powi(2) + b * b).sqrt();
    let l1 = (half_trace + r).max(0.0);
    let l2 = (half_trace - r).max(0.0);
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    (l1, l2, theta)
}

/// Renders points (colored by label when given) and one ellipse per
/// cluster to a standalone SVG document.
pub fn cluster_plot(points: &[[f64; 2]], labels: Option<&[usize]>, clusters: &[Ellipse]) -> String {
    let xs = points.iter().map(|p| p[0]).chain(clusters.iter().map(|e| e.cx));
    let ys = points.iter().map(|p| p[1]).chain(clusters.iter().map(|e| e.cy));
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in xs {
        min_x = min_x.min(v);
        max_x = max_x.max(v);
    }
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in ys {
        min_y = min_y.min(v);
        max_y = max_y.max(v);
    }
    if !min_x.is_finite() {
        (min_x, max_x, min_y, max_y) = (0.0, 1.0, 0.0, 1.0);
    }
    // leave room for the ellipses themselves
    for e in clusters {
        let (l1, _, _) = eigen2(e.cov);
        let reach = 2.0 * l1.sqrt();
        min_x = min_x.min(e.cx - reach);
        max_x = max_x.max(e.cx + reach);
        min_y = min_y.min(e.cy - reach);
        max_y = max_y.max(e.cy + reach);
    }
    let span_x = (max_x - min_x).max(1e-9);
    let span_y = (max_y - min_y).max(1e-9);
    // one scale for both axes so ellipse shapes survive the projection
    let scale = ((WIDTH - 2.0 * MARGIN) / span_x).min((HEIGHT - 2.0 * MARGIN) / span_y);
    let to_px = |x: f64, y: f64| -> (f64, f64) {
        (MARGIN + (x - min_x) * scale, HEIGHT - MARGIN - (y - min_y) * scale)
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    for (i, p) in points.iter().enumerate() {
        let (px, py) = to_px(p[0], p[1]);
        let color = labels
            .map(|ys| PALETTE[ys[i] % PALETTE.len()])
            .unwrap_or("#777777");
        let _ = writeln!(
            svg,
            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"2.5\" fill=\"{color}\" fill-opacity=\"0.55\"/>"
        );
    }
    for e in clusters {
        let (l1, l2, theta) = eigen2(e.cov);
        let (rx, ry) = (2.0 * l1.sqrt() * scale, 2.0 * l2.sqrt() * scale);
        let (px, py) = to_px(e.cx, e.cy);
        // the y-axis flip mirrors angles, hence the sign change
        let deg = -theta.to_degrees();
        let _ = writeln!(
            svg,
            "<ellipse cx=\"{px:.2}\" cy=\"{py:.2}\" rx=\"{rx:.2}\" ry=\"{ry:.2}\" transform=\"rotate({deg:.2} {px:.2} {py:.2})\" fill=\"none\" stroke=\"#222222\" stroke-width=\"1.5\"/>"
        );
        let _ = writeln!(
            svg,
            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"3.5\" fill=\"none\" stroke=\"#222222\" stroke-width=\"1.5\"/>"
        );
    }
    svg.push_str("</svg>\n");
    svg
}
