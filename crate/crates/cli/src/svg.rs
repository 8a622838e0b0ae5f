//! Minimal SVG writer for curve plots. Spatial curves are drawn in their xy projection.

use bikelab::Vec3;
use std::fmt::Write;

pub struct Layer {
    pub points: Vec<Vec3>,
    pub closed: bool,
    pub color: &'static str,
    pub label: String,
}

pub struct Plot {
    pub layers: Vec<Layer>,
    pub markers: Vec<(Vec3, &'static str)>,
}

const SIZE: f64 = 600.0;
const MARGIN: f64 = 30.0;

impl Plot {
    pub fn new() -> Self {
        Self { layers: Vec::new(), markers: Vec::new() }
    }

    pub fn layer(&mut self, points: &[Vec3], color: &'static str, label: impl Into<String>) {
        self.layers.push(Layer { points: points.to_vec(), closed: true, color, label: label.into() });
    }

    pub fn render(&self) -> String {
        let all = self.layers.iter().flat_map(|l| l.points.iter()).chain(self.markers.iter().map(|(p, _)| p));
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in all {
            for i in 0..2 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        if !lo[0].is_finite() {
            lo = [-1.0, -1.0];
            hi = [1.0, 1.0];
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
        let scale = (SIZE - 2.0 * MARGIN) / span;
        let map = |p: &Vec3| (MARGIN + (p.x - lo[0]) * scale, SIZE - MARGIN - (p.y - lo[1]) * scale);

        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#);
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        for (k, l) in self.layers.iter().enumerate() {
            let mut d = String::new();
            for (i, p) in l.points.iter().enumerate() {
                let (x, y) = map(p);
                let _ = write!(d, "{}{x:.3},{y:.3} ", if i == 0 { "M" } else { "L" });
            }
            if l.closed {
                d.push('Z');
            }
            let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.5"><title>{}</title></path>"#, d.trim_end(), l.color, l.label);
            let _ = writeln!(s, r#"<text x="{MARGIN}" y="{:.1}" font-size="12" fill="{}">{}</text>"#, 16.0 + 14.0 * k as f64, l.color, l.label);
        }
        for (p, color) in &self.markers {
            let (x, y) = map(p);
            let _ = writeln!(s, r#"<circle cx="{x:.3}" cy="{y:.3}" r="4" fill="none" stroke="{color}" stroke-width="1.5"/>"#);
        }
        s.push_str("</svg>\n");
        s
    }
}
