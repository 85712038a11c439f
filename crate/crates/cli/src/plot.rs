//! Minimal truth-vs-estimate line plots as standalone SVG.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 300.0;
const MARGIN: f64 = 40.0;

fn polyline(values: &[f64], lo: f64, hi: f64, colour: &str) -> String {
    let n = values.len().max(2) - 1;
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut points = String::new();
    for (i, v) in values.iter().enumerate() {
        let x = MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / n as f64;
        let y = HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / span;
        let _ = write!(points, "{x:.2},{y:.2} ");
    }
    format!(
        "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"1\" points=\"{}\"/>\n",
        points.trim_end()
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Actual consumption in red, the estimate in blue, on a shared y-axis.
pub fn truth_vs_estimate_svg(title: &str, truth: &[f64], estimate: &[f64]) -> String {
    let all = truth.iter().chain(estimate).copied().filter(|v| v.is_finite());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo.min(0.0), hi) } else { (0.0, 1.0) };
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{MARGIN}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n\
         <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"12\" fill=\"red\">actual</text>\n\
         <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"12\" fill=\"blue\">estimate</text>\n\
         <text x=\"4\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\">{hi:.3}</text>\n\
         <text x=\"4\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\">{lo:.3}</text>\n",
        escape(title),
        WIDTH - 160.0,
        WIDTH - 100.0,
        MARGIN,
        HEIGHT - MARGIN,
    );
    svg.push_str(&polyline(truth, lo, hi, "red"));
    svg.push_str(&polyline(estimate, lo, hi, "blue"));
    svg.push_str("</svg>\n");
    svg
}
