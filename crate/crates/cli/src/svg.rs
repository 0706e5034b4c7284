//! Minimal hand-written SVG rendering for PR curves.
//!
//! The CSV is the canonical artifact; the SVG is a pure rendering of it.
//! The polyline's `points` attribute holds the exact `recall,precision`
//! pairs (same number formatting as the CSV) inside a group transform that
//! maps the unit square onto the plot area, so the two files carry
//! identical point sequences by construction.

use slimconv::evalkit::PrPoint;

const SIZE: u32 = 520;
const MARGIN: u32 = 60;

pub fn pr_curve_svg(title: &str, points: &[PrPoint]) -> String {
    let plot = SIZE - 2 * MARGIN;
    let x0 = MARGIN;
    let y0 = SIZE - MARGIN;
    let pts = points
        .iter()
        .map(|p| format!("{},{}", p.recall, p.precision))
        .collect::<Vec<_>>()
        .join(" ");

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"30\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>\n",
        SIZE / 2,
        xml_escape(title)
    ));
    // Axes.
    svg.push_str(&format!(
        "  <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{}\" y2=\"{y0}\" stroke=\"black\"/>\n",
        x0 + plot
    ));
    svg.push_str(&format!(
        "  <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{}\" stroke=\"black\"/>\n",
        y0 - plot
    ));
    // Tick labels at 0 and 1 on both axes.
    svg.push_str(&format!(
        "  <text x=\"{x0}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">0</text>\n",
        y0 + 20
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">1</text>\n",
        x0 + plot,
        y0 + 20
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">1</text>\n",
        x0 - 8,
        y0 - plot + 4
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">recall</text>\n",
        x0 + plot / 2,
        y0 + 40
    ));
    svg.push_str(&format!(
        "  <text x=\"20\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 20 {})\">precision</text>\n",
        y0 - plot / 2,
        y0 - plot / 2
    ));
    // The data, in recall/precision coordinates.
    svg.push_str(&format!(
        "  <g transform=\"translate({x0},{y0}) scale({plot},-{plot})\">\n"
    ));
    svg.push_str(&format!(
        "    <polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" vector-effect=\"non-scaling-stroke\" points=\"{pts}\"/>\n"
    ));
    svg.push_str("  </g>\n</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
