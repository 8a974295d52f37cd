//! Minimal static SVG line plots.

use std::fmt::Write;

const W: f64 = 800.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

pub struct Line<'a> {
    pub label: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub colour: &'a str,
    pub dashed: bool,
}

pub struct Band<'a> {
    pub x: &'a [f64],
    pub lo: &'a [f64],
    pub hi: &'a [f64],
    pub colour: &'a str,
}

#[derive(Default)]
pub struct Figure<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub lines: Vec<Line<'a>>,
    pub bands: Vec<Band<'a>>,
    /// Vertical markers, e.g. detected peaks.
    pub markers: Vec<f64>,
}

fn extent<'b>(vals: impl Iterator<Item = &'b f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(raw);
    let first = (lo / step).ceil() * step;
    (0..=10)
        .map(|i| first + step * i as f64)
        .filter(|t| *t <= hi + 1e-9 * step)
        .collect()
}

impl Figure<'_> {
    pub fn to_svg(&self) -> String {
        let (x0, x1) = extent(
            self.lines
                .iter()
                .flat_map(|l| l.x.iter())
                .chain(self.bands.iter().flat_map(|b| b.x.iter())),
        );
        let (_, y1) = extent(
            self.lines
                .iter()
                .flat_map(|l| l.y.iter())
                .chain(self.bands.iter().flat_map(|b| b.hi.iter())),
        );
        let (y0, y1) = (
            0f64.min(extent(self.lines.iter().flat_map(|l| l.y.iter())).0),
            y1 * 1.05,
        );
        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
        let py = |y: f64| H - BOTTOM - (y.clamp(y0, y1) - y0) / (y1 - y0) * (H - TOP - BOTTOM);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            W / 2.0,
            escape(self.title)
        );

        for b in &self.bands {
            let mut pts: Vec<String> =
                b.x.iter()
                    .zip(b.hi)
                    .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
                    .collect();
            pts.extend(
                b.x.iter()
                    .zip(b.lo)
                    .rev()
                    .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))),
            );
            let _ = writeln!(
                s,
                r#"<polygon points="{}" fill="{}" fill-opacity="0.25" stroke="none"/>"#,
                pts.join(" "),
                b.colour
            );
        }
        for m in &self.markers {
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" x2="{x:.2}" y1="{}" y2="{}" stroke="#555" stroke-dasharray="4 3"/>"##,
                TOP,
                H - BOTTOM,
                x = px(*m)
            );
        }
        for l in &self.lines {
            let pts: Vec<String> =
                l.x.iter()
                    .zip(l.y)
                    .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
                    .collect();
            let dash = if l.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#,
                pts.join(" "),
                l.colour
            );
        }

        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - LEFT - RIGHT,
            H - TOP - BOTTOM
        );
        for t in ticks(x0, x1) {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
                px(t),
                H - BOTTOM + 16.0,
                fmt_tick(t)
            );
        }
        for t in ticks(y0, y1) {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 6.0,
                py(t) + 4.0,
                fmt_tick(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            W / 2.0,
            H - 12.0,
            escape(self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(self.y_label)
        );
        for (i, l) in self.lines.iter().enumerate() {
            let y = TOP + 16.0 + 16.0 * i as f64;
            let x = W - RIGHT - 150.0;
            let _ = writeln!(
                s,
                r#"<line x1="{x}" x2="{}" y1="{y}" y2="{y}" stroke="{}" stroke-width="2"/>"#,
                x + 24.0,
                l.colour
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}">{}</text>"#,
                x + 30.0,
                y + 4.0,
                escape(l.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-3) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
