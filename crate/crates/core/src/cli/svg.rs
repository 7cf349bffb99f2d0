//! Minimal SVG line plots and heatmaps.

use std::fmt::Write;

const W: f64 = 480.0;
const H: f64 = 320.0;
const PAD: f64 = 48.0;

fn header(out: &mut String, title: &str) {
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" font-size="13" text-anchor="middle" font-family="sans-serif">{}</text>"#, W / 2.0, escape(title));
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Markers joined by a polyline, plus an optional dashed overlay curve.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)], overlay: Option<&[(f64, f64)]>) -> String {
    let all = points.iter().chain(overlay.unwrap_or(&[]));
    let (x0, x1) = range(all.clone().map(|p| p.0));
    let (y0, y1) = range(all.map(|p| p.1));
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut out = String::new();
    header(&mut out, title);
    let _ = writeln!(out, r#"<path d="M{PAD} {PAD} V{} H{}" stroke="black" fill="none"/>"#, H - PAD, W - PAD);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11" text-anchor="middle" font-family="sans-serif">{}</text>"#, W / 2.0, H - 10.0, escape(x_label));
    let _ = writeln!(out, r#"<text x="14" y="{}" font-size="11" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 14 {})">{}</text>"#, H / 2.0, H / 2.0, escape(y_label));
    for (v, y) in [(y0, H - PAD), (y1, PAD)] {
        let _ = writeln!(out, r#"<text x="{}" y="{y}" font-size="9" text-anchor="end" font-family="sans-serif">{v:.4}</text>"#, PAD - 4.0);
    }
    for (v, x) in [(x0, PAD), (x1, W - PAD)] {
        let _ = writeln!(out, r#"<text x="{x}" y="{}" font-size="9" text-anchor="middle" font-family="sans-serif">{v:.3e}</text>"#, H - PAD + 12.0);
    }
    let poly: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
    let _ = writeln!(out, r##"<polyline points="{}" stroke="#1f3b73" fill="none"/>"##, poly.join(" "));
    for &(x, y) in points {
        let _ = writeln!(out, r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f3b73"/>"##, sx(x), sy(y));
    }
    if let Some(curve) = overlay {
        let poly: Vec<String> = curve.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(out, r##"<polyline points="{}" stroke="#b03030" stroke-dasharray="5,4" fill="none"/>"##, poly.join(" "));
    }
    out.push_str("</svg>\n");
    out
}

/// Grey-scale heatmap; `None` cells are left blank.
pub fn heatmap(title: &str, nx: usize, ny: usize, values: &[Option<f64>]) -> String {
    let (lo, hi) = range(values.iter().flatten().copied());
    let cell = ((W - 2.0 * PAD) / nx as f64).min((H - 2.0 * PAD) / ny as f64);
    let mut out = String::new();
    header(&mut out, title);
    for iy in 0..ny {
        for ix in 0..nx {
            let Some(v) = values[iy * nx + ix] else { continue };
            let shade = (255.0 * (1.0 - (v - lo) / (hi - lo))).round() as u8;
            // Row 0 at the bottom.
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="rgb({shade},{shade},{shade})"/>"#,
                PAD + ix as f64 * cell,
                PAD + (ny - 1 - iy) as f64 * cell
            );
        }
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="9" font-family="sans-serif">min {lo:.4e} max {hi:.4e}</text>"#, PAD, H - 12.0);
    out.push_str("</svg>\n");
    out
}
