//! A tiny deterministic SVG plotter for report figures.

use std::fmt::Write;

use super::{HistogramData, TopkComparison};

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - y / self.y1 * (H - 2.0 * MARGIN)
    }
}

fn open(title: &str, frame: &Frame, out: &mut String) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = write!(out, r##"<rect width="{W}" height="{H}" fill="#ffffff"/>"##);
    let _ = write!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, W / 2.0, escape(title));
    let (left, bottom) = (MARGIN, H - MARGIN);
    let _ = write!(
        out,
        r##"<path d="M{left} {MARGIN} L{left} {bottom} L{} {bottom}" stroke="#000" fill="none"/>"##,
        W - MARGIN
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = frame.x0 + t * (frame.x1 - frame.x0);
        let _ = write!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xv:.2}</text>"#, frame.px(xv), bottom + 15.0);
        let yv = t * frame.y1;
        let _ = write!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.2}</text>"#, left - 4.0, frame.py(yv) + 4.0);
    }
}

fn legend(labels: &[&str], out: &mut String) {
    for (i, label) in labels.iter().enumerate() {
        let y = MARGIN + 14.0 * i as f64;
        let _ = write!(
            out,
            r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            W - MARGIN - 120.0,
            y - 9.0,
            PALETTE[i % PALETTE.len()],
            W - MARGIN - 105.0,
            y,
            escape(label)
        );
    }
}

/// Overlaid line plots, one per `(label, xs, ys)` series.
pub fn line_chart(title: &str, series: &[(&str, &[f64], &[f64])]) -> String {
    let x0 = series.iter().flat_map(|s| s.1.iter()).copied().fold(f64::INFINITY, f64::min);
    let x1 = series.iter().flat_map(|s| s.1.iter()).copied().fold(f64::NEG_INFINITY, f64::max);
    let y1 = series.iter().flat_map(|s| s.2.iter()).copied().fold(0.0, f64::max);
    let frame = Frame {
        x0: if x0.is_finite() { x0 } else { 0.0 },
        x1: if x1 > x0 { x1 } else { x0 + 1.0 },
        y1: if y1 > 0.0 { y1 * 1.05 } else { 1.0 },
    };
    let mut out = String::new();
    open(title, &frame, &mut out);
    for (i, (_, xs, ys)) in series.iter().enumerate() {
        let mut d = String::new();
        for (j, (x, y)) in xs.iter().zip(ys.iter()).enumerate() {
            let _ = write!(d, "{}{:.2} {:.2} ", if j == 0 { "M" } else { "L" }, frame.px(*x), frame.py(*y));
        }
        let _ = write!(out, r#"<path d="{}" stroke="{}" fill="none" stroke-width="1.5"/>"#, d.trim_end(), PALETTE[i % PALETTE.len()]);
    }
    legend(&series.iter().map(|s| s.0).collect::<Vec<_>>(), &mut out);
    out.push_str("</svg>\n");
    out
}

/// Overlaid step histograms sharing one x range.
pub fn histogram_chart(title: &str, series: &[(&str, &HistogramData)]) -> String {
    let x0 = series.iter().filter_map(|s| s.1.bin_edges.first()).copied().fold(f64::INFINITY, f64::min);
    let x1 = series.iter().filter_map(|s| s.1.bin_edges.last()).copied().fold(f64::NEG_INFINITY, f64::max);
    let y1 = series.iter().flat_map(|s| s.1.densities.iter()).copied().fold(0.0, f64::max);
    let frame = Frame {
        x0: if x0.is_finite() { x0 } else { 0.0 },
        x1: if x1 > x0 { x1 } else { x0 + 1.0 },
        y1: if y1 > 0.0 { y1 * 1.05 } else { 1.0 },
    };
    let mut out = String::new();
    open(title, &frame, &mut out);
    for (i, (_, h)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for (e, d) in h.bin_edges.windows(2).zip(&h.densities) {
            if *d <= 0.0 {
                continue;
            }
            let (xa, xb) = (frame.px(e[0]), frame.px(e[1]));
            let (ya, yb) = (frame.py(*d), frame.py(0.0));
            let _ = write!(
                out,
                r#"<rect x="{xa:.2}" y="{ya:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.4" stroke="{color}"/>"#,
                xb - xa,
                yb - ya
            );
        }
    }
    legend(&series.iter().map(|s| s.0).collect::<Vec<_>>(), &mut out);
    out.push_str("</svg>\n");
    out
}

/// Two panels of paired bars: each side's top words with the other side's
/// probability beside them.
pub fn paired_bars(title: &str, cmp: &TopkComparison) -> String {
    let rows = cmp.human.len().max(cmp.model.len()).max(1);
    let row_h = 14.0;
    let height = 60.0 + row_h * 2.0 * rows as f64 + 30.0;
    let width = 2.0 * W;
    let mut out = String::new();
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height:.0}" viewBox="0 0 {width} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = write!(out, r##"<rect width="{width}" height="{height:.0}" fill="#ffffff"/>"##);
    let _ = write!(out, r#"<text x="{W}" y="20" text-anchor="middle" font-size="13">{}</text>"#, escape(title));
    for (panel, (name, bars)) in [("human", &cmp.human), ("model", &cmp.model)].iter().enumerate() {
        let x_off = panel as f64 * W + 100.0;
        let scale = W - 160.0;
        let _ = write!(out, r#"<text x="{:.1}" y="42">top words: {name}</text>"#, x_off);
        for (i, b) in bars.iter().enumerate() {
            let y = 50.0 + 2.0 * row_h * i as f64;
            let _ = write!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, x_off - 6.0, y + row_h, escape(&b.word));
            let (own, other) = if panel == 0 { (b.own, b.other) } else { (b.other, b.own) };
            let _ = write!(out, r#"<rect x="{x_off:.1}" y="{y:.1}" width="{:.2}" height="{:.1}" fill="{}"/>"#, own * scale, row_h - 2.0, PALETTE[0]);
            let _ = write!(out, r#"<rect x="{x_off:.1}" y="{:.1}" width="{:.2}" height="{:.1}" fill="{}"/>"#, y + row_h - 2.0, other * scale, row_h - 2.0, PALETTE[1]);
        }
    }
    out.push_str("</svg>\n");
    out
}
