use super::{MinutiaKind, SingularityKind, Template};
use crate::error::Result;
use crate::imaging::{ColorImage, GrayImage};

const ENDING: [f64; 3] = [230.0, 30.0, 30.0];
const BIFURCATION: [f64; 3] = [30.0, 90.0, 240.0];
const SINGULAR: [f64; 3] = [20.0, 200.0, 40.0];

/// Debug rendering: the image in gray, minutiae as filled dots with a
/// direction tick (endings red, bifurcations blue), cores as squares and
/// deltas as triangles in green.
pub fn render_overlay(img: &GrayImage, template: &Template) -> Result<ColorImage> {
    let (w, h) = (img.width(), img.height());
    let mut px: Vec<[f64; 3]> = img.data().iter().map(|&v| [v, v, v]).collect();
    let mut put = |x: f64, y: f64, c: [f64; 3]| {
        let (xi, yi) = (x.round(), y.round());
        if xi >= 0.0 && yi >= 0.0 && (xi as usize) < w && (yi as usize) < h {
            px[yi as usize * w + xi as usize] = c;
        }
    };
    for m in &template.minutiae {
        let c = match m.kind {
            MinutiaKind::Ending => ENDING,
            MinutiaKind::Bifurcation => BIFURCATION,
        };
        for dy in -2..=2 {
            for dx in -2..=2 {
                if dx * dx + dy * dy <= 5 {
                    put(m.x + dx as f64, m.y + dy as f64, c);
                }
            }
        }
        for k in 3..10 {
            let k = k as f64;
            put(m.x + k * m.theta.cos(), m.y + k * m.theta.sin(), c);
        }
    }
    for s in &template.singularities {
        let outline: Vec<(f64, f64)> = match s.kind {
            SingularityKind::Core => vec![(-6.0, -6.0), (6.0, -6.0), (6.0, 6.0), (-6.0, 6.0)],
            SingularityKind::Delta => vec![(0.0, -7.0), (6.0, 5.0), (-6.0, 5.0)],
        };
        for (i, &(ax, ay)) in outline.iter().enumerate() {
            let (bx, by) = outline[(i + 1) % outline.len()];
            let steps = (bx - ax).abs().max((by - ay).abs()).ceil() as usize * 2;
            for k in 0..=steps {
                let t = k as f64 / steps as f64;
                put(s.x + ax + t * (bx - ax), s.y + ay + t * (by - ay), SINGULAR);
            }
        }
    }
    ColorImage::from_fn(w, h, |x, y| px[y * w + x])
}
