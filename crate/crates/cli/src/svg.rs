//! Minimal SVG plots: line traces and ray diagrams.

use std::f64::consts::PI;
use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 40.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn header(out: &mut String, w: f64, h: f64, title: &str) {
    let _ = writeln!(out, r##"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"##);
    let _ = writeln!(out, r##"<rect width="{w}" height="{h}" fill="white"/>"##);
    let _ = writeln!(out, r##"<text x="{PAD}" y="20" font-family="sans-serif" font-size="14">{title}</text>"##);
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// One polyline per named series over the common abscissa `xs`.
pub fn traces(title: &str, x_label: &str, xs: &[f64], series: &[(String, Vec<f64>)]) -> String {
    let (x0, x1) = range(xs.iter().copied());
    let (y0, y1) = range(series.iter().flat_map(|(_, v)| v.iter().copied()));
    let px = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut out = String::new();
    header(&mut out, W, H, title);
    let _ = writeln!(
        out,
        r##"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="#999"/>"##,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(
        out,
        r##"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{x_label} in [{x0:.4}, {x1:.4}]; values in [{y0:.4}, {y1:.4}]</text>"##,
        W / 2.0,
        H - 12.0
    );
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = xs
            .iter()
            .zip(ys)
            .filter(|(_, y)| y.is_finite())
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(out, r##"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"##, pts.join(" "));
        let _ = writeln!(
            out,
            r##"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{name}</text>"##,
            W - PAD - 76.0,
            PAD + 14.0 * (k as f64 + 1.0)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Rays from the origin at the given angles, with labels.
pub fn rays(title: &str, rays: &[(f64, String)], base_angle: Option<f64>) -> String {
    let side = 400.0;
    let c = side / 2.0;
    let r = c - PAD;
    let mut out = String::new();
    header(&mut out, side, side, title);
    let _ = writeln!(out, r##"<circle cx="{c}" cy="{c}" r="{r}" fill="none" stroke="#ccc"/>"##);
    let end = |a: f64, s: f64| (c + s * r * a.cos(), c - s * r * a.sin());
    if let Some(b) = base_angle {
        let (x, y) = end(b, 1.0);
        let _ = writeln!(out, r##"<line x1="{c}" y1="{c}" x2="{x:.2}" y2="{y:.2}" stroke="#999" stroke-dasharray="4 3"/>"##);
    }
    for (k, (a, label)) in rays.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let (x, y) = end(*a, 1.0);
        let (lx, ly) = end(*a, 1.08);
        let _ = writeln!(out, r##"<line x1="{c}" y1="{c}" x2="{x:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/>"##);
        let _ = writeln!(
            out,
            r##"<text x="{lx:.2}" y="{ly:.2}" font-family="sans-serif" font-size="11" text-anchor="middle" fill="{color}">{label} ({:.1} deg)</text>"##,
            a * 180.0 / PI
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_formed() {
        let s = traces("t", "step", &[0.0, 1.0, 2.0], &[("a".into(), vec![1.0, 2.0, f64::NAN])]);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert_eq!(s.matches("<polyline").count(), 1);
        let r = rays("r", &[(0.0, "(0,1)".into()), (PI, "(1,0)".into())], Some(PI / 2.0));
        assert_eq!(r.matches("<line").count(), 3);
    }
}
