//! Minimal self-contained SVG line charts for sweep summaries. One
//! polyline per series, fixed palette, no external assets.

/// One labelled line; points are (x, y) and are drawn in order.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 62.0;
const MARGIN_RIGHT: f64 = 130.0;
const MARGIN_TOP: f64 = 24.0;
const MARGIN_BOTTOM: f64 = 46.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// Renders the series as a complete SVG document string.
pub fn curve_svg(series: &[Series], x_label: &str, y_label: &str) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let (x_min, x_max) = padded_domain(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y_min, y_max) = padded_domain(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let to_x = |v: f64| MARGIN_LEFT + (v - x_min) / (x_max - x_min) * plot_w;
    let to_y = |v: f64| MARGIN_TOP + (y_max - v) / (y_max - y_min) * plot_h;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    out.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));

    let x0 = fmt2(MARGIN_LEFT);
    let x1 = fmt2(MARGIN_LEFT + plot_w);
    let y0 = fmt2(MARGIN_TOP);
    let y1 = fmt2(MARGIN_TOP + plot_h);
    out.push_str(&format!(
        "  <line x1=\"{x0}\" y1=\"{y1}\" x2=\"{x1}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    ));
    out.push_str(&format!(
        "  <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    ));

    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = x_min + t * (x_max - x_min);
        let yv = y_min + t * (y_max - y_min);
        let xp = fmt2(to_x(xv));
        let yp = fmt2(to_y(yv));
        out.push_str(&format!(
            "  <line x1=\"{xp}\" y1=\"{y1}\" x2=\"{xp}\" y2=\"{}\" stroke=\"black\"/>\n",
            fmt2(MARGIN_TOP + plot_h + 4.0)
        ));
        out.push_str(&format!(
            "  <text x=\"{xp}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            fmt2(MARGIN_TOP + plot_h + 18.0),
            fmt_tick(xv)
        ));
        out.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{yp}\" x2=\"{x0}\" y2=\"{yp}\" stroke=\"black\"/>\n",
            fmt2(MARGIN_LEFT - 4.0)
        ));
        out.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            fmt2(MARGIN_LEFT - 8.0),
            fmt2(to_y(yv) + 4.0),
            fmt_tick(yv)
        ));
    }

    out.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        fmt2(MARGIN_LEFT + plot_w / 2.0),
        fmt2(HEIGHT - 8.0),
        escape(x_label)
    ));
    out.push_str(&format!(
        "  <text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        fmt2(MARGIN_TOP + plot_h / 2.0),
        fmt2(MARGIN_TOP + plot_h / 2.0),
        escape(y_label)
    ));

    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let pts: Vec<String> =
            s.points.iter().map(|&(x, y)| format!("{},{}", fmt2(to_x(x)), fmt2(to_y(y)))).collect();
        out.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        for &(x, y) in &s.points {
            out.push_str(&format!(
                "  <circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"{color}\"/>\n",
                fmt2(to_x(x)),
                fmt2(to_y(y))
            ));
        }
        let ly = MARGIN_TOP + 10.0 + idx as f64 * 18.0;
        let lx = MARGIN_LEFT + plot_w + 14.0;
        out.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            fmt2(lx),
            fmt2(ly - 4.0),
            fmt2(lx + 18.0),
            fmt2(ly - 4.0)
        ));
        out.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\">{}</text>\n",
            fmt2(lx + 24.0),
            fmt2(ly),
            escape(&s.label)
        ));
    }

    out.push_str("</svg>\n");
    out
}

/// Data domain with 5% padding; degenerate or empty domains widen to a
/// unit span so the projection never divides by zero.
fn padded_domain(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        min = min.min(v);
        max = max.max(v);
    }
    if min > max {
        return (0.0, 1.0);
    }
    if min == max {
        return (min - 0.5, max + 0.5);
    }
    let pad = (max - min) * 0.05;
    (min - pad, max + pad)
}

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

fn fmt_tick(v: f64) -> String {
    format!("{v:.3}")
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
