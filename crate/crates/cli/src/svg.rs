//! Minimal SVG line charts and heatmaps.
//!
//! Numbers are written with fixed precision so output is byte-stable.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mark {
    Line,
    Dots,
    DashedLine,
}

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub mark: Mark,
    pub color: &'static str,
}

#[derive(Clone, Debug, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
    /// Vertical markers at an x position with a caption.
    pub markers: Vec<(f64, String)>,
    /// Free text lines printed under the legend.
    pub notes: Vec<String>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, timestamp: Option<u64>) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    if let Some(t) = timestamp {
        let _ = writeln!(out, "<!-- generated at unix time {t} -->");
    }
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
}

/// Round-number tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![lo];
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Axes {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

impl Chart {
    fn transform_y(&self, y: f64) -> Option<f64> {
        if self.log_y {
            (y > 0.0).then(|| y.log10())
        } else {
            Some(y)
        }
    }

    pub fn to_svg(&self, timestamp: Option<u64>) -> String {
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .filter_map(|(x, y)| Some((x, self.transform_y(y)?)))
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .collect();
        let xs = || pts.iter().map(|p| p.0).chain(self.markers.iter().map(|m| m.0)).filter(|x| x.is_finite());
        let (x0, x1) = padded(xs().fold(f64::INFINITY, f64::min), xs().fold(f64::NEG_INFINITY, f64::max));
        let (y0, y1) = padded(
            pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
            pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
        );
        let ax = Axes { x0, x1, y0, y1 };
        let mut out = String::new();
        header(&mut out, timestamp);
        let _ = writeln!(out, r#"<text x="{:.1}" y="22" font-size="14" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(&self.title));
        let (l, r, t, b) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
        let _ = writeln!(out, r##"<rect x="{l:.1}" y="{t:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#444"/>"##, r - l, b - t);
        for tx in ticks(x0, x1) {
            let x = ax.px(tx);
            let _ = writeln!(out, r##"<line x1="{x:.1}" y1="{b:.1}" x2="{x:.1}" y2="{:.1}" stroke="#444"/>"##, b + 4.0);
            let _ = writeln!(out, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, b + 17.0, fmt_tick(tx));
        }
        for ty in ticks(y0, y1) {
            let y = ax.py(ty);
            let label = if self.log_y { format!("1e{}", fmt_tick(ty)) } else { fmt_tick(ty) };
            let _ = writeln!(out, r##"<line x1="{:.1}" y1="{y:.1}" x2="{l:.1}" y2="{y:.1}" stroke="#444"/>"##, l - 4.0);
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{label}</text>"#, l - 6.0, y + 4.0);
        }
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (l + r) / 2.0, HEIGHT - 10.0, escape(&self.x_label));
        let _ = writeln!(
            out,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            (t + b) / 2.0,
            (t + b) / 2.0,
            escape(&self.y_label)
        );
        let _ = writeln!(
            out,
            r#"<defs><clipPath id="plot-area"><rect x="{l:.1}" y="{t:.1}" width="{:.1}" height="{:.1}"/></clipPath></defs>"#,
            r - l,
            b - t
        );
        let _ = writeln!(out, r#"<g clip-path="url(#plot-area)">"#);
        for s in &self.series {
            let coords: Vec<(f64, f64)> = s
                .points
                .iter()
                .filter_map(|&(x, y)| Some((x, self.transform_y(y)?)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(x, y)| (ax.px(x), ax.py(y)))
                .collect();
            match s.mark {
                Mark::Dots => {
                    for (x, y) in coords {
                        let _ = writeln!(out, r#"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="{}"/>"#, s.color);
                    }
                }
                Mark::Line | Mark::DashedLine => {
                    if coords.is_empty() {
                        continue;
                    }
                    let path: Vec<String> = coords.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
                    let dash = if s.mark == Mark::DashedLine { r#" stroke-dasharray="6 4""# } else { "" };
                    let _ = writeln!(
                        out,
                        r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"{dash}/>"#,
                        path.join(" "),
                        s.color
                    );
                }
            }
        }
        let _ = writeln!(out, "</g>");
        for (mx, caption) in &self.markers {
            if !mx.is_finite() {
                continue;
            }
            let x = ax.px(*mx);
            let _ = writeln!(out, r##"<line x1="{x:.1}" y1="{t:.1}" x2="{x:.1}" y2="{b:.1}" stroke="#888" stroke-dasharray="3 3"/>"##);
            let _ = writeln!(out, r##"<text x="{:.1}" y="{:.1}" fill="#555">{}</text>"##, x + 3.0, t + 14.0, escape(caption));
        }
        let lx = r + 12.0;
        let mut ly = t + 10.0;
        for s in &self.series {
            match s.mark {
                Mark::Dots => {
                    let _ = writeln!(out, r#"<circle cx="{:.1}" cy="{ly:.1}" r="3" fill="{}"/>"#, lx + 8.0, s.color);
                }
                _ => {
                    let _ = writeln!(out, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="2"/>"#, lx + 16.0, s.color);
                }
            }
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 22.0, ly + 4.0, escape(&s.label));
            ly += 18.0;
        }
        for n in &self.notes {
            ly += 4.0;
            let _ = writeln!(out, r#"<text x="{lx:.1}" y="{ly:.1}" font-size="11">{}</text>"#, escape(n));
            ly += 14.0;
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Color map over a rectangular grid; `NaN` cells are left blank.
#[derive(Clone, Debug, Default)]
pub struct Heatmap {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Cell centers along x, in display units.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `values[j][i]` at `(x[i], y[j])`.
    pub values: Vec<Vec<f64>>,
    pub notes: Vec<String>,
}

/// Diverging map: red below zero, blue above, white at zero; scaled by `scale`.
fn diverging(v: f64, scale: f64) -> String {
    let t = (v / scale).clamp(-1.0, 1.0);
    let fade = |c: f64| (255.0 * (1.0 - t.abs()) + c * t.abs()).round() as u8;
    let (r, g, b) = if t < 0.0 { (fade(214.0), fade(39.0), fade(40.0)) } else { (fade(31.0), fade(119.0), fade(180.0)) };
    format!("#{r:02x}{g:02x}{b:02x}")
}

impl Heatmap {
    pub fn to_svg(&self, timestamp: Option<u64>) -> String {
        let mut out = String::new();
        header(&mut out, timestamp);
        let _ = writeln!(out, r#"<text x="{:.1}" y="22" font-size="14" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(&self.title));
        let (l, r, t, b) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
        let (nx, ny) = (self.x.len(), self.y.len());
        if nx == 0 || ny == 0 {
            out.push_str("</svg>\n");
            return out;
        }
        let (cw, ch) = ((r - l) / nx as f64, (b - t) / ny as f64);
        let scale = self
            .values
            .iter()
            .flatten()
            .filter(|v| v.is_finite())
            .map(|v| v.abs())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        for (j, row) in self.values.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    continue;
                }
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.1}" y="{:.1}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                    l + i as f64 * cw,
                    b - (j + 1) as f64 * ch,
                    cw + 0.05,
                    ch + 0.05,
                    diverging(v, scale)
                );
            }
        }
        let _ = writeln!(out, r##"<rect x="{l:.1}" y="{t:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#444"/>"##, r - l, b - t);
        for (i, &xv) in self.x.iter().enumerate().step_by((nx / 6).max(1)) {
            let x = l + (i as f64 + 0.5) * cw;
            let _ = writeln!(out, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, b + 17.0, fmt_tick(xv));
        }
        for (j, &yv) in self.y.iter().enumerate().step_by((ny / 6).max(1)) {
            let y = b - (j as f64 + 0.5) * ch;
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, l - 6.0, y + 4.0, fmt_tick(yv));
        }
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (l + r) / 2.0, HEIGHT - 10.0, escape(&self.x_label));
        let _ = writeln!(
            out,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            (t + b) / 2.0,
            (t + b) / 2.0,
            escape(&self.y_label)
        );
        let lx = r + 12.0;
        for (k, (label, v)) in [("+max", scale), ("0", 0.0), ("-max", -scale)].iter().enumerate() {
            let y = t + 10.0 + 18.0 * k as f64;
            let _ = writeln!(out, r##"<rect x="{lx:.1}" y="{:.1}" width="14" height="12" fill="{}" stroke="#444"/>"##, y - 8.0, diverging(*v, scale));
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{label}</text>"#, lx + 20.0, y + 2.0);
        }
        let mut ly = t + 70.0;
        let _ = writeln!(out, r#"<text x="{lx:.1}" y="{ly:.1}" font-size="11">max |v| = {scale:.3e}</text>"#);
        for n in &self.notes {
            ly += 16.0;
            let _ = writeln!(out, r#"<text x="{lx:.1}" y="{ly:.1}" font-size="11">{}</text>"#, escape(n));
        }
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        assert_eq!(ticks(0.0, 1.0), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        assert_eq!(ticks(1.0, 8.0), vec![2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn chart_is_deterministic_and_escapes() {
        let c = Chart {
            title: "a < b".into(),
            log_y: true,
            series: vec![Series {
                label: "s".into(),
                points: vec![(1.0, 1.0), (2.0, 0.01), (3.0, -1.0), (4.0, f64::NAN)],
                mark: Mark::Line,
                color: PALETTE[0],
            }],
            markers: vec![(2.5, "knee".into())],
            ..Chart::default()
        };
        let a = c.to_svg(None);
        assert_eq!(a, c.to_svg(None));
        assert!(a.contains("a &lt; b"));
        assert!(!a.contains("NaN"));
        assert!(!a.contains("generated at"));
        assert!(c.to_svg(Some(7)).contains("unix time 7"));
    }

    #[test]
    fn heatmap_colors() {
        assert_eq!(diverging(0.0, 1.0), "#ffffff");
        assert_eq!(diverging(-1.0, 1.0), "#d62728");
        assert_eq!(diverging(2.0, 1.0), "#1f77b4");
        let h = Heatmap {
            x: vec![1.0, 2.0],
            y: vec![1.0],
            values: vec![vec![1.0, f64::NAN]],
            ..Heatmap::default()
        };
        assert_eq!(h.to_svg(None).matches("<rect").count(), 6);
    }
}
