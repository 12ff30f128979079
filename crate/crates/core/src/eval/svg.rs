//! Hand-written SVG charts. Output depends only on the inputs, so renders
//! are byte-stable.

use std::fmt::Write;

use super::{ClassReport, CorrelationNetwork};
use crate::dataset::{Family, Trend};

const PALETTE: [&str; 4] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759"];

fn family_color(f: Family) -> &'static str {
    match f {
        Family::Network => "#e15759",
        Family::Technical => "#4e79a7",
        Family::Social => "#59a14f",
    }
}

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Doc {
    out: String,
}

impl Doc {
    fn new(w: f64, h: f64) -> Self {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#
        );
        let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        Self { out }
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.out,
            r#"<text x="{x:.1}" y="{y:.1}" font-size="{size}" text-anchor="{anchor}">{}</text>"#,
            escape(s)
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.out,
            r#"<rect x="{x:.1}" y="{y:.1}" width="{w:.1}" height="{h:.1}" fill="{fill}"/>"#
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        let _ = writeln!(
            self.out,
            r#"<line x1="{x1:.1}" y1="{y1:.1}" x2="{x2:.1}" y2="{y2:.1}" stroke="{stroke}" stroke-width="{width:.2}"/>"#
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str) {
        let p: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
        let _ = writeln!(
            self.out,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="1.5"/>"#,
            p.join(" ")
        );
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

type MetricGetter = Box<dyn Fn(&ClassReport) -> f64>;

/// Grouped bars of overall, uptrend and downtrend precision/recall/F1 plus
/// accuracy, one bar per model.
pub fn metrics_chart(models: &[(&str, &ClassReport)]) -> String {
    let groups: Vec<(String, MetricGetter)> = vec![
        ("accuracy".into(), Box::new(|r: &ClassReport| r.accuracy)),
        (
            "precision".into(),
            Box::new(|r: &ClassReport| r.macro_precision),
        ),
        ("recall".into(), Box::new(|r: &ClassReport| r.macro_recall)),
        ("f1".into(), Box::new(|r: &ClassReport| r.macro_f1)),
        (
            "up precision".into(),
            Box::new(|r: &ClassReport| r.class(Trend::Up).precision),
        ),
        (
            "up recall".into(),
            Box::new(|r: &ClassReport| r.class(Trend::Up).recall),
        ),
        (
            "up f1".into(),
            Box::new(|r: &ClassReport| r.class(Trend::Up).f1),
        ),
        (
            "down precision".into(),
            Box::new(|r: &ClassReport| r.class(Trend::Down).precision),
        ),
        (
            "down recall".into(),
            Box::new(|r: &ClassReport| r.class(Trend::Down).recall),
        ),
        (
            "down f1".into(),
            Box::new(|r: &ClassReport| r.class(Trend::Down).f1),
        ),
    ];
    let (left, top, plot_h, group_w) = (50.0, 40.0, 240.0, 70.0);
    let width = left + group_w * groups.len() as f64 + 20.0;
    let mut d = Doc::new(width, top + plot_h + 70.0);
    d.text(width / 2.0, 22.0, 14.0, "middle", "Classification metrics");
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let y = top + plot_h * (1.0 - v);
        d.line(left, y, width - 20.0, y, "#dddddd", 1.0);
        d.text(left - 6.0, y + 4.0, 10.0, "end", &format!("{v:.2}"));
    }
    let bar_w = (group_w - 14.0) / models.len().max(1) as f64;
    for (g, (label, f)) in groups.iter().enumerate() {
        let x0 = left + g as f64 * group_w + 7.0;
        for (m, (_, report)) in models.iter().enumerate() {
            let v = f(report).clamp(0.0, 1.0);
            d.rect(
                x0 + m as f64 * bar_w,
                top + plot_h * (1.0 - v),
                bar_w - 2.0,
                plot_h * v,
                PALETTE[m % PALETTE.len()],
            );
        }
        d.text(
            x0 + (group_w - 14.0) / 2.0,
            top + plot_h + 16.0,
            9.0,
            "middle",
            label,
        );
    }
    for (m, (name, _)) in models.iter().enumerate() {
        let x = left + m as f64 * 110.0;
        d.rect(
            x,
            top + plot_h + 40.0,
            12.0,
            12.0,
            PALETTE[m % PALETTE.len()],
        );
        d.text(x + 18.0, top + plot_h + 50.0, 11.0, "start", name);
    }
    d.finish()
}

/// Confusion matrices side by side, shaded by row-normalized counts.
pub fn confusion_chart(models: &[(&str, &ClassReport)]) -> String {
    let cell = 48.0;
    let block = cell * 3.0 + 90.0;
    let mut d = Doc::new(block * models.len().max(1) as f64 + 20.0, cell * 3.0 + 90.0);
    for (m, (name, r)) in models.iter().enumerate() {
        let x0 = 70.0 + m as f64 * block;
        let y0 = 40.0;
        d.text(x0 + cell * 1.5, 22.0, 13.0, "middle", name);
        for a in 0..3 {
            let row: usize = r.confusion[a].iter().sum();
            for p in 0..3 {
                let c = r.confusion[a][p];
                let frac = if row == 0 { 0.0 } else { c as f64 / row as f64 };
                let shade = (255.0 - 180.0 * frac).round() as u8;
                d.rect(
                    x0 + p as f64 * cell,
                    y0 + a as f64 * cell,
                    cell - 1.0,
                    cell - 1.0,
                    &format!("rgb({shade},{shade},255)"),
                );
                d.text(
                    x0 + p as f64 * cell + cell / 2.0,
                    y0 + a as f64 * cell + cell / 2.0 + 4.0,
                    12.0,
                    "middle",
                    &c.to_string(),
                );
            }
            let name = Trend::ALL[a].name();
            d.text(
                x0 - 6.0,
                y0 + a as f64 * cell + cell / 2.0 + 4.0,
                10.0,
                "end",
                name,
            );
            d.text(
                x0 + a as f64 * cell + cell / 2.0,
                y0 + 3.0 * cell + 14.0,
                10.0,
                "middle",
                name,
            );
        }
        d.text(
            x0 + cell * 1.5,
            y0 + 3.0 * cell + 32.0,
            10.0,
            "middle",
            "predicted",
        );
    }
    d.finish()
}

/// Features on a circle grouped by family; edge width grows with `|r|`,
/// solid for positive and dashed for negative correlation.
pub fn network_chart(net: &CorrelationNetwork) -> String {
    let size = 620.0;
    let (cx, cy, radius) = (size / 2.0, size / 2.0, size / 2.0 - 110.0);
    let mut order: Vec<usize> = (0..net.nodes.len()).collect();
    order.sort_by_key(|&i| (net.nodes[i].family, i));
    let mut pos = vec![(0.0, 0.0); net.nodes.len()];
    for (k, &i) in order.iter().enumerate() {
        let angle = std::f64::consts::TAU * k as f64 / net.nodes.len().max(1) as f64;
        pos[i] = (cx + radius * angle.cos(), cy + radius * angle.sin());
    }
    let mut d = Doc::new(size, size);
    for e in &net.edges {
        let ((x1, y1), (x2, y2)) = (pos[e.a], pos[e.b]);
        let dash = if e.r < 0.0 {
            r#" stroke-dasharray="4 3""#
        } else {
            ""
        };
        let _ = writeln!(
            d.out,
            r##"<line x1="{x1:.1}" y1="{y1:.1}" x2="{x2:.1}" y2="{y2:.1}" stroke="#888888" stroke-opacity="0.6" stroke-width="{:.2}"{dash}/>"##,
            0.5 + 3.0 * e.r.abs()
        );
    }
    for (i, n) in net.nodes.iter().enumerate() {
        let (x, y) = pos[i];
        let _ = writeln!(
            d.out,
            r#"<circle cx="{x:.1}" cy="{y:.1}" r="7" fill="{}"/>"#,
            family_color(n.family)
        );
        let (lx, ly) = (
            cx + (radius + 14.0) * (x - cx) / radius,
            cy + (radius + 14.0) * (y - cy) / radius,
        );
        let anchor = if lx < cx - 1.0 { "end" } else { "start" };
        d.text(lx, ly + 3.0, 9.0, anchor, &n.name);
    }
    for (k, f) in [Family::Network, Family::Technical, Family::Social]
        .iter()
        .enumerate()
    {
        let y = 20.0 + k as f64 * 16.0;
        let _ = writeln!(
            d.out,
            r#"<circle cx="16" cy="{y:.1}" r="5" fill="{}"/>"#,
            family_color(*f)
        );
        d.text(26.0, y + 4.0, 11.0, "start", f.prefix());
    }
    d.finish()
}

fn scale(values: &[f64], lo_px: f64, hi_px: f64) -> impl Fn(f64) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    move |v| lo_px + (v - lo) / span * (hi_px - lo_px)
}

/// Similarity of consecutive intervals and mean price, on separate axes.
pub fn similarity_price_chart(similarity: &[f64], price: &[f64]) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 320.0, 60.0, 60.0, 30.0, 40.0);
    let mut d = Doc::new(w, h);
    d.text(
        w / 2.0,
        18.0,
        13.0,
        "middle",
        "Interval similarity vs price",
    );
    let n = similarity.len().max(price.len()).max(2);
    let x = |i: usize| left + (w - left - right) * i as f64 / (n - 1) as f64;
    d.line(left, h - bottom, w - right, h - bottom, "#333333", 1.0);
    d.line(left, top, left, h - bottom, PALETTE[0], 1.0);
    d.line(w - right, top, w - right, h - bottom, PALETTE[1], 1.0);
    for (series, color, axis_x, anchor) in [
        (similarity, PALETTE[0], left - 6.0, "end"),
        (price, PALETTE[1], w - right + 6.0, "start"),
    ] {
        if series.is_empty() {
            continue;
        }
        let y = scale(series, h - bottom, top);
        d.polyline(
            &series
                .iter()
                .enumerate()
                .map(|(i, &v)| (x(i), y(v)))
                .collect::<Vec<_>>(),
            color,
        );
        let lo = series.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        d.text(axis_x, h - bottom, 10.0, anchor, &format!("{lo:.3}"));
        d.text(axis_x, top + 8.0, 10.0, anchor, &format!("{hi:.3}"));
    }
    d.text(left, h - 12.0, 10.0, "start", "similarity");
    d.text(w - right, h - 12.0, 10.0, "end", "price");
    d.finish()
}

/// Horizontal bars of `(name, score)`, largest first.
pub fn importance_chart(title: &str, scores: &[(String, f64)]) -> String {
    let mut rows: Vec<&(String, f64)> = scores.iter().collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1));
    let (left, bar_h, width) = (200.0, 16.0, 560.0);
    let mut d = Doc::new(width, 50.0 + bar_h * rows.len() as f64);
    d.text(width / 2.0, 20.0, 13.0, "middle", title);
    let max = rows.iter().map(|r| r.1.abs()).fold(0.0, f64::max);
    for (i, (name, v)) in rows.iter().enumerate() {
        let y = 34.0 + i as f64 * bar_h;
        let len = if max > 0.0 {
            v.abs() / max * (width - left - 70.0)
        } else {
            0.0
        };
        let color = Family::of_column(name).map_or(PALETTE[0], family_color);
        d.rect(left, y, len, bar_h - 3.0, color);
        d.text(left - 6.0, y + bar_h - 5.0, 10.0, "end", name);
        d.text(
            left + len + 4.0,
            y + bar_h - 5.0,
            9.0,
            "start",
            &format!("{v:.4}"),
        );
    }
    d.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::score;

    #[test]
    fn charts_are_well_formed() {
        let y = [Trend::Up, Trend::Down, Trend::Flat, Trend::Up];
        let r = score(&[Trend::Up, Trend::Down, Trend::Up, Trend::Up], &y).unwrap();
        for svg in [
            metrics_chart(&[("base", &r), ("full", &r)]),
            confusion_chart(&[("base", &r)]),
            similarity_price_chart(&[0.1, 0.5, 0.3], &[100.0, 120.0, 90.0]),
            importance_chart("gain <top>", &[("np.a".into(), 2.0), ("ta.b".into(), 1.0)]),
        ] {
            assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
            assert!(!svg.contains("NaN"));
        }
        assert!(importance_chart("a & b", &[]).contains("a &amp; b"));
    }
}
