//! Minimal self-contained SVG scatter plots.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Scatter of `(index, value)` coloured by `labels`.
pub fn index_scatter(values: &[f64], labels: &[usize], title: &str) -> String {
    let n = values.len().max(1);
    let (mut lo, mut hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if !lo.is_finite() || !hi.is_finite() {
        (lo, hi) = (-1.0, 1.0);
    }
    if hi - lo < 1e-300 {
        (lo, hi) = (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let x = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * (i as f64 + 0.5) / n as f64;
    let y = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="25" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        out,
        r#"<path d="M{left} {top}V{bottom}H{right}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    if lo < 0.0 && hi > 0.0 {
        let z = y(0.0);
        let _ = writeln!(
            out,
            r##"<line x1="{left}" y1="{z:.2}" x2="{right}" y2="{z:.2}" stroke="#999" stroke-dasharray="4 3"/>"##
        );
    }
    for (v, anchor) in [(hi, top), (lo, bottom)] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="10">{v:.3e}</text>"#,
            left - 4.0,
            anchor + 3.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{right}" y="{}" text-anchor="end" font-family="sans-serif" font-size="10">index (N = {})</text>"#,
        bottom + 15.0,
        values.len()
    );
    let mut groups: Vec<usize> = labels.to_vec();
    groups.sort_unstable();
    groups.dedup();
    for &g in &groups {
        let colour = PALETTE[g % PALETTE.len()];
        let _ = writeln!(out, r#"<g fill="{colour}">"#);
        for (i, (&v, _)) in values
            .iter()
            .zip(labels)
            .enumerate()
            .filter(|(_, (_, &l))| l == g)
        {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.1}" cy="{:.1}" r="1.8"/>"#,
                x(i),
                y(v)
            );
        }
        let _ = writeln!(out, "</g>");
    }
    for (slot, &g) in groups.iter().enumerate() {
        let ly = top + 12.0 * slot as f64;
        let _ = writeln!(
            out,
            r#"<circle cx="{}" cy="{ly}" r="4" fill="{}"/><text x="{}" y="{}" font-family="sans-serif" font-size="10">component {g}</text>"#,
            right - 80.0,
            PALETTE[g % PALETTE.len()],
            right - 72.0,
            ly + 3.0
        );
    }
    out.push_str("</svg>\n");
    out
}
