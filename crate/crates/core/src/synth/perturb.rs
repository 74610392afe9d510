use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::imaging::GrayImage;

/// Rotation by `angle` about `(cx, cy)` followed by a shift `(tx, ty)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub angle: f64,
    pub tx: f64,
    pub ty: f64,
    pub cx: f64,
    pub cy: f64,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            angle: 0.0,
            tx: 0.0,
            ty: 0.0,
            cx: 0.0,
            cy: 0.0,
        }
    }

    pub fn apply_point(&self, x: f64, y: f64) -> (f64, f64) {
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let (dx, dy) = (x - self.cx, y - self.cy);
        (
            c * dx - s * dy + self.cx + self.tx,
            s * dx + c * dy + self.cy + self.ty,
        )
    }

    pub fn inverse_point(&self, x: f64, y: f64) -> (f64, f64) {
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let (dx, dy) = (x - self.cx - self.tx, y - self.cy - self.ty);
        (c * dx + s * dy + self.cx, -s * dx + c * dy + self.cy)
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &RigidTransform) -> RigidTransform {
        // Any rigid motion can be written about the outer center.
        let angle = self.angle + first.angle;
        let (px, py) = first.apply_point(self.cx, self.cy);
        let (ox, oy) = self.apply_point(px, py);
        RigidTransform {
            angle,
            tx: ox - self.cx,
            ty: oy - self.cy,
            cx: self.cx,
            cy: self.cy,
        }
    }
}

/// Seeded rigid pose change (bilinear resampling, uncovered pixels take the
/// image mean) plus additive Gaussian noise, clamped to `[0, 255]`.
pub fn perturb_impression(
    img: &GrayImage,
    seed: u64,
    max_shift: f64,
    max_rot: f64,
    noise_sigma: f64,
) -> GrayImage {
    perturb_impression_with_transform(img, seed, max_shift, max_rot, noise_sigma).0
}

fn symmetric(rng: &mut ChaCha8Rng, bound: f64) -> f64 {
    if bound > 0.0 {
        rng.random_range(-bound..=bound)
    } else {
        0.0
    }
}

/// As [`perturb_impression`], also returning the pose applied.
pub fn perturb_impression_with_transform(
    img: &GrayImage,
    seed: u64,
    max_shift: f64,
    max_rot: f64,
    noise_sigma: f64,
) -> (GrayImage, RigidTransform) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (img.width(), img.height());
    let t = RigidTransform {
        angle: symmetric(&mut rng, max_rot.abs()),
        tx: symmetric(&mut rng, max_shift.abs()),
        ty: symmetric(&mut rng, max_shift.abs()),
        cx: (w as f64 - 1.0) / 2.0,
        cy: (h as f64 - 1.0) / 2.0,
    };
    let fill = img.mean();
    let src = img.data();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = t.inverse_point(x as f64, y as f64);
            out.push(bilinear(src, w, h, sx, sy).unwrap_or(fill));
        }
    }
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("positive sigma");
        for v in &mut out {
            *v += normal.sample(&mut rng);
        }
    }
    let img = GrayImage::from_clamped(w, h, out, img.provenance()).expect("dimensions unchanged");
    (img, t)
}

fn bilinear(src: &[f64], w: usize, h: usize, x: f64, y: f64) -> Option<f64> {
    const EPS: f64 = 1e-9;
    if x < -EPS || y < -EPS || x > (w - 1) as f64 + EPS || y > (h - 1) as f64 + EPS {
        return None;
    }
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let at = |xx: usize, yy: usize| src[yy * w + xx];
    if fx == 0.0 && fy == 0.0 {
        return Some(at(x0, y0));
    }
    Some(
        at(x0, y0) * (1.0 - fx) * (1.0 - fy)
            + at(x1, y0) * fx * (1.0 - fy)
            + at(x0, y1) * (1.0 - fx) * fy
            + at(x1, y1) * fx * fy,
    )
}
