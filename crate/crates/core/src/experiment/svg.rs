//! Dependency-free SVG line charts with a log-scaled y axis.

use std::fmt::Write as _;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN: f64 = 70.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

pub struct Series<'a> {
    pub label: &'a str,
    pub points: &'a [(u64, f64)],
}

/// Plots each series as a polyline over `t`, restricted to `t_range` when
/// given. Points with nonpositive or non-finite `y` are skipped.
pub fn log_plot(title: &str, y_label: &str, series: &[Series<'_>], t_range: Option<(u64, u64)>) -> String {
    let keep = |&&(t, y): &&(u64, f64)| y > 0.0 && y.is_finite() && t_range.is_none_or(|(a, b)| t >= a && t <= b);
    let all: Vec<(u64, f64)> = series.iter().flat_map(|s| s.points.iter().filter(keep).copied()).collect();

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    if all.is_empty() {
        let _ = writeln!(out, "</svg>");
        return out;
    }

    let t_min = all.iter().map(|p| p.0).min().unwrap_or(0) as f64;
    let t_max = (all.iter().map(|p| p.0).max().unwrap_or(1) as f64).max(t_min + 1.0);
    let mut lo = all.iter().map(|p| p.1.log10()).fold(f64::INFINITY, f64::min).floor();
    let mut hi = all.iter().map(|p| p.1.log10()).fold(f64::NEG_INFINITY, f64::max).ceil();
    if hi <= lo {
        lo -= 1.0;
        hi += 1.0;
    }
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN / 2.0, HEIGHT - MARGIN, MARGIN / 2.0 + 10.0);
    let sx = |t: f64| x0 + (t - t_min) / (t_max - t_min) * (x1 - x0);
    let sy = |y: f64| y0 + (y.log10() - lo) / (hi - lo) * (y1 - y0);

    let _ = writeln!(out, r#"<g stroke="black" stroke-width="1" fill="none">"#);
    let _ = writeln!(
        out,
        r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/>"#
    );
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, r#"<g font-family="sans-serif" font-size="11">"#);
    let decades = (hi - lo) as i64;
    let stride = (decades / 8 + 1).max(1);
    for d in (lo as i64..=hi as i64).step_by(stride as usize) {
        let y = sy(10f64.powi(d as i32));
        let _ = writeln!(
            out,
            r##"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"##,
            x0 - 6.0,
            y + 4.0
        );
    }
    for k in 0..=4 {
        let t = t_min + (t_max - t_min) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(t),
            y0 + 18.0,
            t.round() as u64
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">t</text><text x="16" y="{:.2}" transform="rotate(-90 16 {:.2})" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 20.0,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
    let _ = writeln!(out, "</g>");

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> =
            s.points.iter().filter(keep).map(|&(t, y)| format!("{:.2},{:.2}", sx(t as f64), sy(y))).collect();
        if !pts.is_empty() {
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
                pts.join(" ")
            );
        }
        let ly = y1 + 14.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11">{}</text>"#,
            x1 - 150.0,
            x1 - 130.0,
            x1 - 125.0,
            ly + 4.0,
            escape(s.label)
        );
    }
    let _ = writeln!(out, "</svg>");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_one_polyline_per_series() {
        let a = [(0, 1.0), (10, 0.1), (20, 0.0)];
        let b = [(0, 2.0), (10, 0.5)];
        let svg =
            log_plot("err", "err_sq", &[Series { label: "a<1>", points: &a }, Series { label: "b", points: &b }], None);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a&lt;1&gt;"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn zoom_drops_outside_points() {
        let a = [(0, 1.0), (10, 0.1), (20, 0.01)];
        let svg = log_plot("err", "err_sq", &[Series { label: "a", points: &a }], Some((10, 20)));
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        assert_eq!(line.matches(',').count(), 2);
    }

    #[test]
    fn empty_input_is_valid_svg() {
        let svg = log_plot("none", "err_sq", &[], None);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}
