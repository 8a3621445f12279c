//! Minimal self-contained SVG line charts.
//!
//! The CSVs are the ground truth; these charts exist so a run can be eyeballed
//! without external tooling. Rendering is deliberately plain — fixed canvas,
//! four ticks per axis, one polyline per series — and fully deterministic, so
//! re-runs produce byte-identical files.

/// One named polyline.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 56.0;
/// Maximum polyline vertices per series; longer series are strided down.
const MAX_POINTS: usize = 800;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// Fixed-precision coordinate formatting keeps the output stable.
fn coord(x: f64) -> String {
    format!("{x:.2}")
}

fn tick_label(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let magnitude = x.abs();
    if (1e-3..1e5).contains(&magnitude) {
        format!("{x:.4}")
    } else {
        format!("{x:e}")
    }
}

/// Render a line chart of `series`. With `log_y` the y axis shows log10 of
/// the values and points with non-positive y are dropped.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], log_y: bool) -> String {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let transformed: Vec<(String, Vec<(f64, f64)>)> = series
        .iter()
        .map(|s| {
            let pts: Vec<(f64, f64)> = s
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!log_y || *y > 0.0))
                .map(|&(x, y)| (x, if log_y { y.log10() } else { y }))
                .collect();
            (s.label.clone(), pts)
        })
        .collect();
    for (_, pts) in &transformed {
        for &(x, y) in pts {
            xs.push(x);
            ys.push(y);
        }
    }

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"13\">\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    ));

    if xs.is_empty() {
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">no finite data</text>\n</svg>\n",
            WIDTH / 2.0,
            HEIGHT / 2.0
        ));
        return out;
    }

    let (x_min, x_max) = padded_range(&xs);
    let (y_min, y_max) = padded_range(&ys);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| HEIGHT - MARGIN_BOTTOM - (y - y_min) / (y_max - y_min) * plot_h;

    // Axes.
    out.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333\"/>\n",
        coord(MARGIN_LEFT),
        coord(HEIGHT - MARGIN_BOTTOM),
        coord(WIDTH - MARGIN_RIGHT),
        coord(HEIGHT - MARGIN_BOTTOM)
    ));
    out.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333\"/>\n",
        coord(MARGIN_LEFT),
        coord(MARGIN_TOP),
        coord(MARGIN_LEFT),
        coord(HEIGHT - MARGIN_BOTTOM)
    ));

    // Ticks.
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let x = x_min + f * (x_max - x_min);
        let px = sx(x);
        out.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#333\"/>\n",
            coord(px),
            coord(HEIGHT - MARGIN_BOTTOM),
            coord(HEIGHT - MARGIN_BOTTOM + 5.0)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            coord(px),
            coord(HEIGHT - MARGIN_BOTTOM + 20.0),
            tick_label(x)
        ));
        let y = y_min + f * (y_max - y_min);
        let py = sy(y);
        out.push_str(&format!(
            "<line x1=\"{1}\" y1=\"{0}\" x2=\"{2}\" y2=\"{0}\" stroke=\"#333\"/>\n",
            coord(py),
            coord(MARGIN_LEFT - 5.0),
            coord(MARGIN_LEFT)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            coord(MARGIN_LEFT - 8.0),
            coord(py + 4.0),
            tick_label(y)
        ));
    }

    // Axis labels.
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        coord(MARGIN_LEFT + plot_w / 2.0),
        coord(HEIGHT - 12.0),
        escape(x_label)
    ));
    let y_title = if log_y {
        format!("log10 {y_label}")
    } else {
        y_label.to_string()
    };
    out.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        coord(MARGIN_TOP + plot_h / 2.0),
        coord(MARGIN_TOP + plot_h / 2.0),
        escape(&y_title)
    ));

    // Series.
    for (idx, (label, pts)) in transformed.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let color = PALETTE[idx % PALETTE.len()];
        let stride = pts.len().div_ceil(MAX_POINTS).max(1);
        let mut path = String::new();
        for (j, &(x, y)) in pts.iter().step_by(stride).enumerate() {
            if j > 0 {
                path.push(' ');
            }
            path.push_str(&format!("{},{}", coord(sx(x)), coord(sy(y))));
        }
        // Always include the final point so the series endpoint is honest.
        if (pts.len() - 1) % stride != 0 {
            let &(x, y) = pts.last().expect("non-empty");
            path.push_str(&format!(" {},{}", coord(sx(x)), coord(sy(y))));
        }
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{path}\"/>\n"
        ));
        // Legend entry.
        let ly = MARGIN_TOP + 16.0 * idx as f64;
        out.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{color}\" stroke-width=\"3\"/>\n",
            coord(WIDTH - MARGIN_RIGHT - 150.0),
            coord(ly),
            coord(WIDTH - MARGIN_RIGHT - 126.0)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{}</text>\n",
            coord(WIDTH - MARGIN_RIGHT - 120.0),
            coord(ly + 4.0),
            escape(label)
        ));
    }

    out.push_str("</svg>\n");
    out
}

fn padded_range(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == hi {
        // Flat data still needs a nonzero span to map onto the canvas.
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = (hi - lo) * 0.03;
    (lo - pad, hi + pad)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
