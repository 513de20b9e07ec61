//! Minimal self-contained SVG charts.

use std::fmt::Write;

use crate::flow::FlowDecomposition;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

/// Line chart of several series; `log_x` plots x on a log2 axis.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], log_x: bool) -> String {
    let tx = |x: f64| if log_x { x.max(1e-12).log2() } else { x };
    let (x0, x1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| tx(p.0))));
    let (y0, y1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let px = |x: f64| MARGIN + (tx(x) - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    header(&mut out, title);
    let _ = writeln!(
        out,
        r#"<path d="M{m} {t} L{m} {b} L{r} {b}" stroke="black" fill="none"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (label, y) in [(y0, y0), (y1, y1)] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{:.3}</text>"#,
            MARGIN - 4.0,
            py(y) + 4.0,
            label
        );
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let d: Vec<String> = s
            .points
            .iter()
            .enumerate()
            .map(|(n, (x, y))| format!("{}{:.2} {:.2}", if n == 0 { "M" } else { "L" }, px(*x), py(*y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<path d="{}" stroke="{color}" stroke-width="2" fill="none"/>"#,
            d.join(" ")
        );
        for (x, y) in &s.points {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                px(*x),
                py(*y)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            WIDTH - MARGIN + 4.0,
            MARGIN + 16.0 * i as f64,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Bars of the per-token probabilities with arrows for each flow into the
/// target, arrow width proportional to the flow weight.
pub fn flow_diagram(probs: &[f64], decomposition: &FlowDecomposition) -> String {
    let k = probs.len().max(1);
    let slot = (WIDTH - 2.0 * MARGIN) / k as f64;
    let base = HEIGHT - MARGIN;
    let scale = HEIGHT - 2.5 * MARGIN;
    let cx = |i: usize| MARGIN + slot * (i as f64 + 0.5);

    let mut out = String::new();
    header(
        &mut out,
        &format!("logit flows into token {}", decomposition.target),
    );
    for (i, p) in probs.iter().enumerate() {
        let h = p * scale;
        let fill = if i == decomposition.target { "#d62728" } else { "#1f77b4" };
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
            cx(i) - slot * 0.35,
            base - h,
            slot * 0.7,
            h
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{i}</text>"#,
            cx(i),
            base + 16.0
        );
    }
    let max_w = decomposition
        .flows
        .iter()
        .map(|f| f.weight.abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    for f in &decomposition.flows {
        let (x1, x2) = (cx(f.source), cx(f.target));
        let mid = (x1 + x2) / 2.0;
        let lift = MARGIN + 10.0;
        let _ = writeln!(
            out,
            r##"<path d="M{x1:.2} {base:.2} Q{mid:.2} {lift:.2} {x2:.2} {base:.2}" stroke="#2ca02c" stroke-opacity="0.7" stroke-width="{:.2}" fill="none"><title>{} -&gt; {}: {}</title></path>"##,
            1.0 + 7.0 * f.weight.abs() / max_w,
            f.source,
            f.target,
            f.weight
        );
    }
    out.push_str("</svg>\n");
    out
}
