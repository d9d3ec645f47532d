//! Minimal static line charts.
//!
//! Each series becomes one `<polyline>` carrying its raw values in a
//! `data-values` attribute so the chart can be checked without re-parsing
//! pixel coordinates.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 120.0;
const MARGIN_Y: f64 = 40.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

pub struct Series<'a> {
    pub name: &'a str,
    pub values: Vec<f64>,
}

pub struct LineChart<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub x: Vec<f64>,
    pub series: Vec<Series<'a>>,
    /// Fixed y range; otherwise fitted to the finite data.
    pub y_range: Option<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

impl LineChart<'_> {
    pub fn render(&self) -> String {
        let (x0, x1) = span(self.x.iter().copied());
        let (y0, y1) = self
            .y_range
            .unwrap_or_else(|| span(self.series.iter().flat_map(|s| s.values.iter().copied())));
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - 2.0 * MARGIN_Y;
        let px = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
        let py = |y: f64| HEIGHT - MARGIN_Y - (y - y0) / (y1 - y0) * plot_h;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            escape(self.title)
        );
        let (bx, by) = (MARGIN_LEFT, HEIGHT - MARGIN_Y);
        let _ = writeln!(
            out,
            r#"<path d="M{bx} {MARGIN_Y} L{bx} {by} L{} {by}" stroke="black" fill="none"/>"#,
            MARGIN_LEFT + plot_w
        );
        for (v, anchor_y) in [(y0, by), (y1, MARGIN_Y)] {
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                bx - 6.0,
                anchor_y + 4.0,
                fmt_tick(v)
            );
        }
        for (v, anchor) in [(x0, "start"), (x1, "end")] {
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="{anchor}">{}</text>"#,
                px(v),
                by + 16.0,
                fmt_tick(v)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            HEIGHT - 6.0,
            escape(self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            MARGIN_Y + plot_h / 2.0,
            MARGIN_Y + plot_h / 2.0,
            escape(self.y_label)
        );

        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let points: Vec<String> = self
                .x
                .iter()
                .zip(&s.values)
                .filter(|(_, y)| y.is_finite())
                .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let raw: Vec<String> = s.values.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(
                out,
                r#"<polyline data-series="{}" data-values="{}" points="{}" stroke="{color}" stroke-width="1.5" fill="none"/>"#,
                escape(s.name),
                raw.join(" "),
                points.join(" ")
            );
            let ly = MARGIN_Y + 16.0 * i as f64;
            let lx = WIDTH - MARGIN_RIGHT + 12.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
                lx + 18.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}">{}</text>"#,
                lx + 24.0,
                ly + 4.0,
                escape(s.name)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart(values: Vec<f64>) -> String {
        LineChart {
            title: "a < b",
            x_label: "epoch",
            y_label: "loss",
            x: (0..values.len()).map(|i| i as f64).collect(),
            series: vec![Series {
                name: "train",
                values,
            }],
            y_range: None,
        }
        .render()
    }

    fn polyline_points(svg: &str) -> usize {
        let start = svg.find("points=\"").unwrap() + 8;
        let end = start + svg[start..].find('"').unwrap();
        svg[start..end].split_whitespace().count()
    }

    #[test]
    fn one_point_per_finite_value() {
        assert_eq!(polyline_points(&chart(vec![1.0, 0.5, 0.25, 0.2])), 4);
        assert_eq!(polyline_points(&chart(vec![1.0, f64::NAN, 0.25])), 2);
    }

    #[test]
    fn text_is_escaped_and_constant_series_render() {
        let svg = chart(vec![0.3; 3]);
        assert!(svg.contains("a &lt; b"));
        assert!(!svg.contains("NaN,"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn raw_values_round_trip() {
        let v = vec![0.1 + 0.2, 1.0 / 3.0];
        let svg = chart(v.clone());
        let start = svg.find("data-values=\"").unwrap() + 13;
        let end = start + svg[start..].find('"').unwrap();
        let back: Vec<f64> = svg[start..end]
            .split_whitespace()
            .map(|t| t.parse().unwrap())
            .collect();
        assert_eq!(back, v);
    }
}
