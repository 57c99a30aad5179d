//! Minimal static SVG charts. Failures here never fail a run.

use std::fmt::Write as _;
use std::path::Path;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#d62728", "#2ca02c", "#1f77b4", "#9467bd", "#ff7f0e", "#8c564b"];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        Self { x: padded(xs), y: padded(ys) }
    }
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }
    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }
}

fn padded(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
    (lo - 0.04 * span, hi + 0.04 * span)
}

fn header(title: &str, xlabel: &str, ylabel: &str, f: &Frame) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(s, r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let xv = f.x.0 + t * (f.x.1 - f.x.0);
        let yv = f.y.0 + t * (f.y.1 - f.y.0);
        let (px, py) = (f.px(xv), f.py(yv));
        let _ = writeln!(s, r#"<line x1="{px:.1}" y1="{y1}" x2="{px:.1}" y2="{}" stroke="black"/>"#, y1 + 5.0);
        let _ = writeln!(s, r#"<text x="{px:.1}" y="{}" text-anchor="middle">{}</text>"#, y1 + 18.0, tick(xv));
        let _ = writeln!(s, r#"<line x1="{}" y1="{py:.1}" x2="{x0}" y2="{py:.1}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 8.0, py + 4.0, tick(yv));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 12.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline(pts: &[(f64, f64)], f: &Frame, color: &str, width: f64) -> String {
    let coords: Vec<String> =
        pts.iter().filter(|(x, y)| x.is_finite() && y.is_finite()).map(|(x, y)| format!("{:.2},{:.2}", f.px(*x), f.py(*y))).collect();
    format!(r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}"/>"#, coords.join(" ")) + "\n"
}

fn dot(x: f64, y: f64, f: &Frame, color: &str) -> String {
    format!(r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, f.px(x), f.py(y)) + "\n"
}

/// One polyline per named series, with a legend.
pub fn line_plot(path: &Path, title: &str, xlabel: &str, ylabel: &str, series: &[(String, Vec<(f64, f64)>)]) -> std::io::Result<()> {
    let all = series.iter().flat_map(|(_, p)| p.iter());
    let f = Frame::new(all.clone().map(|p| p.0), all.map(|p| p.1));
    let mut s = header(title, xlabel, ylabel, &f);
    for (k, (name, pts)) in series.iter().enumerate() {
        let c = COLORS[k % COLORS.len()];
        s += &polyline(pts, &f, c, 1.5);
        for (x, y) in pts {
            s += &dot(*x, *y, &f, c);
        }
        let ly = TOP + 16.0 + 16.0 * k as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{c}" stroke-width="2"/>"#, W - RIGHT - 150.0, W - RIGHT - 130.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, W - RIGHT - 125.0, ly + 4.0, escape(name));
    }
    s += "</svg>\n";
    std::fs::write(path, s)
}

/// Weighted histogram of one parameter.
pub fn histogram(path: &Path, title: &str, xlabel: &str, values: &[f64], weights: &[f64], bins: usize) -> std::io::Result<()> {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
    let bins = bins.max(1);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut mass = vec![0.0; bins];
    for (x, w) in values.iter().zip(weights) {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        mass[b] += w;
    }
    let dens: Vec<f64> = mass.iter().map(|m| m / width).collect();
    let edges = (0..=bins).map(|b| lo + b as f64 * width);
    let f = Frame { x: padded(edges), y: (0.0, dens.iter().cloned().fold(0.0, f64::max).max(1e-300) * 1.05) };
    let mut s = header(title, xlabel, "density", &f);
    for (b, d) in dens.iter().enumerate() {
        let x0 = f.px(lo + b as f64 * width);
        let x1 = f.px(lo + (b + 1) as f64 * width);
        let y = f.py(*d);
        let _ = writeln!(s, r##"<rect x="{x0:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="#1f77b4" stroke="white"/>"##, x1 - x0, f.py(0.0) - y);
    }
    s += "</svg>\n";
    std::fs::write(path, s)
}

/// Particle paths in a 2-D projection; starts blue, ends red, optional marker.
pub fn path_plot(path: &Path, title: &str, xlabel: &str, ylabel: &str, paths: &[Vec<(f64, f64)>], marker: Option<(f64, f64)>) -> std::io::Result<()> {
    let all = paths.iter().flat_map(|p| p.iter()).chain(marker.iter());
    let f = Frame::new(all.clone().map(|p| p.0), all.map(|p| p.1));
    let mut s = header(title, xlabel, ylabel, &f);
    for p in paths {
        s += &polyline(p, &f, "#888888", 1.0);
        if let (Some(a), Some(b)) = (p.first(), p.last()) {
            s += &dot(a.0, a.1, &f, "#1f77b4");
            s += &dot(b.0, b.1, &f, "#d62728");
        }
    }
    if let Some((x, y)) = marker {
        let (px, py) = (f.px(x), f.py(y));
        let _ = writeln!(s, r##"<polygon points="{:.1},{:.1} {:.1},{:.1} {:.1},{:.1}" fill="#9467bd"/>"##, px, py - 6.0, px - 6.0, py + 5.0, px + 6.0, py + 5.0);
    }
    s += "</svg>\n";
    std::fs::write(path, s)
}

/// Log a plotting failure without failing the run.
pub fn best_effort(r: std::io::Result<()>, what: &Path) {
    if let Err(e) = r {
        eprintln!("warning: could not write plot {}: {e}", what.display());
    }
}
