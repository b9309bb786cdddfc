//! Minimal deterministic SVG writer.

use std::fmt::Write;

pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

fn f(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" { "0.000".into() } else { s }
}

fn points(pts: &[(f64, f64)]) -> String {
    pts.iter().map(|(x, y)| format!("{},{}", f(*x), f(*y))).collect::<Vec<_>>().join(" ")
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn comment(&mut self, text: &str) {
        let _ = writeln!(self.body, "<!-- {} -->", text.replace("--", "- -"));
    }

    pub fn polygon(&mut self, pts: &[(f64, f64)], fill: &str, stroke: &str, width: f64) {
        let _ = writeln!(
            self.body,
            r#"<polygon points="{}" fill="{fill}" stroke="{stroke}" stroke-width="{}"/>"#,
            points(pts),
            f(width)
        );
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, width: f64) {
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{}"/>"#,
            points(pts),
            f(width)
        );
    }

    pub fn circle(&mut self, c: (f64, f64), r: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{}" cy="{}" r="{}" fill="{fill}"/>"#, f(c.0), f(c.1), f(r));
    }

    pub fn text(&mut self, at: (f64, f64), size: f64, text: &str) {
        let esc = text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="{}">{esc}</text>"#,
            f(at.0),
            f(at.1),
            f(size)
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = f(self.width),
            h = f(self.height)
        )
    }
}

/// Affine map from a data bounding box onto the canvas, y pointing up.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub min: (f64, f64),
    pub scale: f64,
    pub margin: f64,
    pub height: f64,
}

impl Frame {
    pub fn fit(pts: &[(f64, f64)], size: f64, margin: f64) -> Self {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let span = (x1 - x0).max(y1 - y0).max(1e-12);
        Self {
            min: (x0, y0),
            scale: (size - 2.0 * margin) / span,
            margin,
            height: size,
        }
    }

    pub fn map(&self, p: (f64, f64)) -> (f64, f64) {
        (
            self.margin + (p.0 - self.min.0) * self.scale,
            self.height - self.margin - (p.1 - self.min.1) * self.scale,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_is_stable() {
        let build = || {
            let mut s = Svg::new(100.0, 100.0);
            s.polyline(&[(0.0, 0.0), (1.0 / 3.0, -0.0)], "black", 1.0);
            s.circle((5.0, 5.0), 2.0, "red");
            s.text((1.0, 2.0), 10.0, "a<b");
            s.finish()
        };
        let a = build();
        assert_eq!(a, build());
        assert!(a.contains("0.000,0.000 0.333,0.000"));
        assert!(a.contains("a&lt;b"));
    }

    #[test]
    fn frame_keeps_aspect() {
        let fr = Frame::fit(&[(0.0, 0.0), (2.0, 1.0)], 220.0, 10.0);
        assert_eq!(fr.map((0.0, 0.0)), (10.0, 210.0));
        assert_eq!(fr.map((2.0, 0.0)), (210.0, 210.0));
    }
}
