//! A static log-log line plot of mean loss against N.

use std::fmt::Write as _;

use dmof_core::sequential::RatePoint;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

/// Plots mean loss and the bound per N. Points with a non-positive mean
/// cannot sit on a log axis and are left out; if none remain, the plot
/// states so instead of drawing a line.
pub fn rate_plot(title: &str, points: &[RatePoint]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="18" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));

    let series: Vec<(&str, &str, Vec<(f64, f64)>)> = vec![
        ("mean loss", "#1f77b4", points.iter().filter(|p| p.mean_loss > 0.0).map(|p| (p.n as f64, p.mean_loss)).collect()),
        ("bound", "#d62728", points.iter().filter(|p| p.bound > 0.0).map(|p| (p.n as f64, p.bound)).collect()),
    ];
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.2.iter().copied()).collect();
    if points.is_empty() || all.is_empty() {
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">no positive values to plot</text>"#, W / 2.0, H / 2.0);
        out.push_str("</svg>\n");
        return out;
    }

    let (x_lo, x_hi) = log_range(points.iter().map(|p| p.n as f64));
    let (y_lo, y_hi) = log_range(all.iter().map(|p| p.1));
    let y_lo = y_lo.floor();
    let y_hi = y_hi.ceil().max(y_lo + 1.0);
    let px = |x: f64| LEFT + (x.log10() - x_lo) / (x_hi - x_lo).max(1e-12) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - (y.log10() - y_lo) / (y_hi - y_lo) * (H - TOP - BOTTOM);

    let _ = writeln!(
        out,
        r#"<path d="M{LEFT},{TOP}V{}H{}" fill="none" stroke="black"/>"#,
        H - BOTTOM,
        W - RIGHT
    );
    for p in points {
        let x = px(p.n as f64);
        let _ = writeln!(out, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, H - BOTTOM, H - BOTTOM + 5.0);
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, H - BOTTOM + 18.0, p.n);
    }
    for k in (y_lo as i32)..=(y_hi as i32) {
        let y = py(10f64.powi(k));
        let _ = writeln!(out, r#"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">1e{k}</text>"#, LEFT - 8.0, y + 4.0);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">N</text>"#, (LEFT + W - RIGHT) / 2.0, H - 10.0);

    for (i, (label, color, pts)) in series.iter().enumerate() {
        if !pts.is_empty() {
            let d: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, d.join(" "));
        }
        let ly = TOP + 14.0 * i as f64 + 10.0;
        let _ = writeln!(out, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, W - 150.0, W - 130.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{label}</text>"#, W - 125.0, ly + 4.0);
    }
    out.push_str("</svg>\n");
    out
}

fn log_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.log10()), hi.max(v.log10())));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
