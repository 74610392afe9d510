use std::collections::HashMap;
use std::f64::consts::PI;

use super::frequency::{FrequencyGrid, MAX_PERIOD, MIN_PERIOD};
use super::orientation::OrientationField;
use super::{BlockMask, Plane};

const ANGLE_BINS: usize = 64;
const PERIOD_STEP: f64 = 0.25;

/// Zero-mean even-symmetric Gabor kernel, square with odd side.
struct Kernel {
    radius: isize,
    taps: Vec<f64>,
}

impl Kernel {
    fn new(angle: f64, period: f64, sigma_ratio: f64) -> Self {
        let sigma = sigma_ratio * period;
        let radius = (3.0 * sigma).ceil() as isize;
        let side = (2 * radius + 1) as usize;
        // Modulation runs across the ridges, along the normal.
        let (nx, ny) = (-angle.sin(), angle.cos());
        let mut taps = Vec::with_capacity(side * side);
        for v in -radius..=radius {
            for u in -radius..=radius {
                let (uf, vf) = (u as f64, v as f64);
                let envelope = (-(uf * uf + vf * vf) / (2.0 * sigma * sigma)).exp();
                taps.push(envelope * (2.0 * PI * (uf * nx + vf * ny) / period).cos());
            }
        }
        let mean = taps.iter().sum::<f64>() / taps.len() as f64;
        for t in &mut taps {
            *t -= mean;
        }
        Self { radius, taps }
    }
}

/// Gabor response tuned per pixel to the interpolated local orientation and
/// frequency. Pixels outside the mask are 0.
pub fn gabor_enhance(
    img: &Plane,
    field: &OrientationField,
    freq: &FrequencyGrid,
    mask: &BlockMask,
) -> Plane {
    gabor_enhance_with(img, field, freq, mask, 0.5)
}

pub(crate) fn gabor_enhance_with(
    img: &Plane,
    field: &OrientationField,
    freq: &FrequencyGrid,
    mask: &BlockMask,
    sigma_ratio: f64,
) -> Plane {
    let filled = freq.filled(mask);
    let periods: Vec<f64> = filled
        .iter()
        .map(|&f| {
            if f > 0.0 {
                (1.0 / f).clamp(MIN_PERIOD, MAX_PERIOD)
            } else {
                0.0
            }
        })
        .collect();
    let mut bank: HashMap<(usize, usize), Kernel> = HashMap::new();
    let mut out = Plane::zeros(img.width, img.height);
    let bs = mask.block_size as f64;
    for y in 0..img.height {
        for x in 0..img.width {
            if !mask.contains(x as f64, y as f64) {
                continue;
            }
            let (c, s) = field.doubled_at(x as f64, y as f64);
            let angle = (0.5 * s.atan2(c)).rem_euclid(PI);
            let period =
                interpolate_period(&periods, mask, x as f64 / bs - 0.5, y as f64 / bs - 0.5);
            if period <= 0.0 {
                continue;
            }
            let abin = ((angle / PI * ANGLE_BINS as f64).round() as usize) % ANGLE_BINS;
            let pbin = (period / PERIOD_STEP).round() as usize;
            let kernel = bank.entry((abin, pbin)).or_insert_with(|| {
                Kernel::new(
                    abin as f64 * PI / ANGLE_BINS as f64,
                    pbin as f64 * PERIOD_STEP,
                    sigma_ratio,
                )
            });
            let r = kernel.radius;
            let side = (2 * r + 1) as usize;
            let mut acc = 0.0;
            let (xi, yi) = (x as isize, y as isize);
            let interior =
                xi >= r && yi >= r && xi + r < img.width as isize && yi + r < img.height as isize;
            if interior {
                for (row, taps) in kernel.taps.chunks_exact(side).enumerate() {
                    let sy = (yi - r) as usize + row;
                    let base = sy * img.width + (xi - r) as usize;
                    let src = &img.data[base..base + side];
                    acc += taps.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                }
            } else {
                for (k, t) in kernel.taps.iter().enumerate() {
                    let u = (k % side) as isize - r;
                    let v = (k / side) as isize - r;
                    acc += t * img.get_reflect(xi + u, yi + v);
                }
            }
            out.data[y * img.width + x] = acc;
        }
    }
    out
}

/// Bilinear interpolation of block periods over masked blocks.
fn interpolate_period(periods: &[f64], mask: &BlockMask, gx: f64, gy: f64) -> f64 {
    let gx = gx.clamp(0.0, (mask.cols - 1) as f64);
    let gy = gy.clamp(0.0, (mask.rows - 1) as f64);
    let x0 = gx.floor() as usize;
    let y0 = gy.floor() as usize;
    let x1 = (x0 + 1).min(mask.cols - 1);
    let y1 = (y0 + 1).min(mask.rows - 1);
    let fx = gx - x0 as f64;
    let fy = gy - y0 as f64;
    let mut sum = 0.0;
    let mut wsum = 0.0;
    for (bx, by, w) in [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x1, y0, fx * (1.0 - fy)),
        (x0, y1, (1.0 - fx) * fy),
        (x1, y1, fx * fy),
    ] {
        let p = periods[by * mask.cols + bx];
        if p > 0.0 && w > 0.0 {
            sum += w * p;
            wsum += w;
        }
    }
    if wsum > 0.0 {
        sum / wsum
    } else {
        0.0
    }
}
