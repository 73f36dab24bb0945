//! Static log2-log2 convergence plots as standalone SVG.

use std::fmt::Write as _;

use crate::harness::fit_log_points;
use crate::table::{CsvRow, Manifest};

const W: f64 = 760.0;
const H: f64 = 500.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Series<'a> {
    name: &'a str,
    rows: Vec<&'a CsvRow>,
}

fn group(rows: &[CsvRow]) -> Vec<Series<'_>> {
    let mut out: Vec<Series> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|s| s.name == r.scheme) {
            Some(s) => s.rows.push(r),
            None => out.push(Series { name: &r.scheme, rows: vec![r] }),
        }
    }
    out
}

/// Renders error against step size on log2 axes: one series per scheme with
/// confidence whiskers, a least-squares slope per series with at least three
/// positive points, and a slope-one guide.
pub fn render_svg(rows: &[CsvRow], manifest: &Manifest, title: &str) -> String {
    let series = group(rows);
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.error > 0.0).map(|r| (r.dt.log2(), r.error.log2())).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for r in rows.iter().filter(|r| r.error > 0.0) {
        x0 = x0.min(r.dt.log2());
        x1 = x1.max(r.dt.log2());
        y0 = y0.min(r.error.log2()).min(if r.ci_low > 0.0 { r.ci_low.log2() } else { f64::MAX });
        y1 = y1.max(r.ci_high.max(r.error).log2());
    }
    if pts.is_empty() {
        (x0, x1, y0, y1) = (-1.0, 0.0, -1.0, 0.0);
    }
    let (x0, x1) = ((x0 - 0.5).floor(), (x1 + 0.5).ceil());
    let (y0, y1) = ((y0 - 0.5).floor(), (y1 + 0.5).ceil());
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    s.push_str("<metadata>\n");
    for (k, v) in &manifest.entries {
        let _ = writeln!(s, "{} = {}", escape(k), escape(v));
    }
    s.push_str("</metadata>\n");
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(title));

    // grid and ticks
    let mut xt = x0;
    while xt <= x1 + 1e-9 {
        let px = sx(xt);
        let _ = writeln!(s, r##"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{:.2}" stroke="#e6e6e6"/>"##, TOP + ph);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{xt}</text>"#, TOP + ph + 16.0);
        xt += 1.0;
    }
    let ystep = ((y1 - y0) / 10.0).ceil().max(1.0);
    let mut yt = y0;
    while yt <= y1 + 1e-9 {
        let py = sy(yt);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#e6e6e6"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{yt}</text>"#, LEFT - 6.0, py + 4.0);
        yt += ystep;
    }
    let _ = writeln!(s, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">log2(dt)</text>"#, LEFT + pw / 2.0, H - 18.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">log2(error)</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    // slope-one guide through the mean of all points
    if !pts.is_empty() {
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let (gx0, gx1) = (x0.max(y0 - my + mx), x1.min(y1 - my + mx));
        if gx0 < gx1 {
            let _ = writeln!(
                s,
                r##"<line class="guide" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="6 4"/>"##,
                sx(gx0),
                sy(my + gx0 - mx),
                sx(gx1),
                sy(my + gx1 - mx)
            );
        }
    }

    let mut legend_y = TOP + 10.0;
    let lx = LEFT + pw + 14.0;
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(s, r#"<g class="series" data-scheme="{}">"#, escape(ser.name));
        let mut sp: Vec<(f64, f64)> = Vec::new();
        for r in ser.rows.iter().filter(|r| r.error > 0.0) {
            let (px, py) = (sx(r.dt.log2()), sy(r.error.log2()));
            sp.push((r.dt.log2(), r.error.log2()));
            let lo = if r.ci_low > 0.0 { sy(r.ci_low.log2()) } else { TOP + ph };
            let hi = sy(r.ci_high.max(r.error).log2());
            let _ = writeln!(
                s,
                r#"<line class="whisker" x1="{px:.2}" y1="{lo:.2}" x2="{px:.2}" y2="{hi:.2}" stroke="{color}"/>"#
            );
            let _ = writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="3.5" fill="{color}"/>"#);
        }
        let path: Vec<String> = sp.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        if path.len() > 1 {
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}"/>"#, path.join(" "));
        }
        let note = match fit_log_points(&sp) {
            Ok(f) => format!("slope {:.3}", f.slope),
            Err(_) => "insufficient data for a fit".to_string(),
        };
        let _ = writeln!(s, r#"<circle cx="{lx:.2}" cy="{legend_y:.2}" r="4" fill="{color}"/>"#);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 10.0, legend_y + 4.0, escape(ser.name));
        let _ = writeln!(
            s,
            r#"<text class="slope" x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
            lx + 10.0,
            legend_y + 18.0,
            escape(&note)
        );
        s.push_str("</g>\n");
        legend_y += 40.0;
    }
    let _ = writeln!(s, r##"<line x1="{lx:.2}" y1="{legend_y:.2}" x2="{:.2}" y2="{legend_y:.2}" stroke="#888" stroke-dasharray="6 4"/>"##, lx + 20.0);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="11">slope 1</text>"#, lx + 26.0, legend_y + 4.0);
    s.push_str("</svg>\n");
    s
}
