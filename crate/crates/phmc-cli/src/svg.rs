//! Minimal SVG line charts, dependency-free. Data-only plotting for the
//! experiment outputs; anything fancier belongs in an external tool fed by
//! the CSVs.

use std::fmt::Write as _;

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
const TONES: [&str; 4] = ["#202020", "#707070", "#a8a8a8", "#d0d0d0"];

/// Render series as polylines with axes and a small legend. Returns the SVG
/// document as a string.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if x.is_finite() && y.is_finite() {
                xs.push(x);
                ys.push(y);
            }
        }
    }
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(
        svg,
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"24\" font-family=\"monospace\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
        WIDTH / 2.0,
        escape(title)
    );
    // axes
    let _ = writeln!(
        svg,
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/><line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>",
        m = MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN
    );
    for (frac, value) in [(0.0, x0), (0.5, 0.5 * (x0 + x1)), (1.0, x1)] {
        let x = MARGIN + frac * (WIDTH - 2.0 * MARGIN);
        let _ = writeln!(
            svg,
            "<text x=\"{x}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">{value:.3}</text>",
            HEIGHT - MARGIN + 18.0
        );
    }
    for (frac, value) in [(0.0, y0), (0.5, 0.5 * (y0 + y1)), (1.0, y1)] {
        let y = HEIGHT - MARGIN - frac * (HEIGHT - 2.0 * MARGIN);
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{y}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">{value:.3}</text>",
            MARGIN - 6.0
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {mid})\">{}</text>",
        HEIGHT / 2.0,
        escape(y_label),
        mid = HEIGHT / 2.0
    );
    for (i, s) in series.iter().enumerate() {
        let tone = TONES[i % TONES.len()];
        let mut path = String::new();
        for &(x, y) in s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
        {
            let _ = write!(path, "{:.2},{:.2} ", px(x), py(y));
        }
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{tone}\" stroke-width=\"1.5\"/>",
            path.trim_end()
        );
        let ly = MARGIN + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{tone}\" stroke-width=\"2\"/><text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\">{}</text>",
            WIDTH - MARGIN - 120.0,
            WIDTH - MARGIN - 96.0,
            WIDTH - MARGIN - 90.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
