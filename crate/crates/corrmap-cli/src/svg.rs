//! Minimal standalone SVG plotting: scatter points, polylines, axes, and
//! the source data embedded as CSV in a `<desc>` element so the file stays
//! self-describing without any plotting dependency.

use std::fmt::Write as _;

pub struct Series<'a> {
    pub label: String,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
    /// Draw a polyline through the points instead of dots.
    pub line: bool,
}

pub struct Plot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub series: Vec<Series<'a>>,
}

const W: f64 = 720.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;

impl<'a> Plot<'a> {
    pub fn render(&self) -> String {
        let mut all: Vec<(f64, f64)> = Vec::new();
        for s in &self.series {
            all.extend_from_slice(&s.points);
        }
        let (mut x0, mut x1) = bounds(all.iter().map(|p| p.0));
        let (mut y0, mut y1) = bounds(all.iter().map(|p| p.1));
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        if y1 <= y0 {
            y1 = y0 + 1.0;
        }
        // A little padding so extreme points are not on the frame.
        let (xp, yp) = ((x1 - x0) * 0.05, (y1 - y0) * 0.05);
        x0 -= xp;
        x1 += xp;
        y0 -= yp;
        y1 += yp;
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
        let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
        );
        let _ = writeln!(out, "<desc>");
        let _ = writeln!(out, "series,label,x,y");
        for (i, s) in self.series.iter().enumerate() {
            for (x, y) in &s.points {
                let _ = writeln!(out, "{i},{},{x},{y}", s.label);
            }
        }
        let _ = writeln!(out, "</desc>");
        let _ = writeln!(
            out,
            r#"<rect width="{W}" height="{H}" fill="white"/>"#
        );
        // Frame and labels.
        let _ = writeln!(
            out,
            r##"<rect x="{m}" y="{m}" width="{iw}" height="{ih}" fill="none" stroke="#444"/>"##,
            m = MARGIN,
            iw = W - 2.0 * MARGIN,
            ih = H - 2.0 * MARGIN
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
            W / 2.0,
            xml_escape(self.title)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            W / 2.0,
            H - 16.0,
            xml_escape(self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="18" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 18 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            xml_escape(self.y_label)
        );
        // Axis ticks: min and max on each axis.
        for (v, x) in [(x0, sx(x0)), (x1, sx(x1))] {
            let _ = writeln!(
                out,
                r#"<text x="{x}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="10">{v:.3}</text>"#,
                H - MARGIN + 16.0
            );
        }
        for (v, y) in [(y0, sy(y0)), (y1, sy(y1))] {
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{y}" text-anchor="end" font-family="sans-serif" font-size="10">{v:.3}</text>"#,
                MARGIN - 6.0
            );
        }

        for s in &self.series {
            if s.line {
                let path: Vec<String> = s
                    .points
                    .iter()
                    .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                    .collect();
                let _ = writeln!(
                    out,
                    r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                    path.join(" "),
                    s.color
                );
            } else {
                for &(x, y) in &s.points {
                    let _ = writeln!(
                        out,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}" fill-opacity="0.7"/>"#,
                        sx(x),
                        sy(y),
                        s.color
                    );
                }
            }
        }
        // Legend.
        for (i, s) in self.series.iter().enumerate() {
            let y = MARGIN + 16.0 * (i as f64 + 1.0);
            let _ = writeln!(
                out,
                r#"<circle cx="{}" cy="{}" r="4" fill="{}"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
                W - MARGIN - 140.0,
                y - 4.0,
                s.color,
                W - MARGIN - 130.0,
                y,
                xml_escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        (0.0, 1.0)
    } else {
        (lo, hi)
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
