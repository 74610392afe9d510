use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use super::Plane;
use crate::error::{Error, Result};

/// Blocks below this coherence take their orientation from coherent
/// neighbours.
pub const COHERENCE_THRESHOLD: f64 = 0.2;

/// Block-wise undirected ridge orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationField {
    pub block_size: usize,
    pub cols: usize,
    pub rows: usize,
    /// Ridge direction per block in `[0, pi)`.
    pub angles: Vec<f64>,
    /// Gradient coherence per block in `[0, 1]`.
    pub coherence: Vec<f64>,
}

impl OrientationField {
    /// Field with the given per-block angle function, sampled at block
    /// centers, and unit coherence.
    pub fn from_fn(
        width: usize,
        height: usize,
        block_size: usize,
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> Self {
        let cols = width.div_ceil(block_size);
        let rows = height.div_ceil(block_size);
        let mut angles = Vec::with_capacity(cols * rows);
        for by in 0..rows {
            for bx in 0..cols {
                let (cx, cy) = block_center(bx, by, block_size);
                angles.push(wrap_pi(f(cx, cy)));
            }
        }
        Self {
            block_size,
            cols,
            rows,
            angles,
            coherence: vec![1.0; cols * rows],
        }
    }

    #[inline]
    pub fn angle(&self, bx: usize, by: usize) -> f64 {
        self.angles[by * self.cols + bx]
    }

    #[inline]
    pub fn coherence_at(&self, bx: usize, by: usize) -> f64 {
        self.coherence[by * self.cols + bx]
    }

    /// Orientation at pixel `(x, y)` interpolated between block centers in
    /// the doubled-angle domain.
    pub fn angle_at(&self, x: f64, y: f64) -> f64 {
        let (c, s) = self.doubled_at(x, y);
        wrap_pi(0.5 * s.atan2(c))
    }

    pub(crate) fn doubled_at(&self, x: f64, y: f64) -> (f64, f64) {
        let bs = self.block_size as f64;
        let gx = (x / bs - 0.5).clamp(0.0, (self.cols - 1) as f64);
        let gy = (y / bs - 0.5).clamp(0.0, (self.rows - 1) as f64);
        let x0 = gx.floor() as usize;
        let y0 = gy.floor() as usize;
        let x1 = (x0 + 1).min(self.cols - 1);
        let y1 = (y0 + 1).min(self.rows - 1);
        let fx = gx - x0 as f64;
        let fy = gy - y0 as f64;
        let mut c = 0.0;
        let mut s = 0.0;
        for (bx, by, w) in [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x1, y0, fx * (1.0 - fy)),
            (x0, y1, (1.0 - fx) * fy),
            (x1, y1, fx * fy),
        ] {
            let a = 2.0 * self.angle(bx, by);
            c += w * a.cos();
            s += w * a.sin();
        }
        (c, s)
    }

    /// Debug dump: `block_x,block_y,angle_rad,coherence`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            writeln!(w, "block_x,block_y,angle_rad,coherence")?;
            for by in 0..self.rows {
                for bx in 0..self.cols {
                    writeln!(
                        w,
                        "{bx},{by},{},{}",
                        self.angle(bx, by),
                        self.coherence_at(bx, by)
                    )?;
                }
            }
            w.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }
}

/// Pixel coordinates of a block's center.
#[inline]
pub(crate) fn block_center(bx: usize, by: usize, block_size: usize) -> (f64, f64) {
    let half = block_size as f64 / 2.0;
    (
        bx as f64 * block_size as f64 + half,
        by as f64 * block_size as f64 + half,
    )
}

#[inline]
pub(crate) fn wrap_pi(a: f64) -> f64 {
    let r = a.rem_euclid(PI);
    if r >= PI {
        0.0
    } else {
        r
    }
}

/// Least-squares block orientation from Sobel gradients accumulated over a
/// window twice the block size, followed by coherence-gated infill and one
/// doubled-angle smoothing pass.
pub fn estimate_orientation(img: &Plane, block_size: usize) -> OrientationField {
    assert!(block_size >= 8, "block_size must be at least 8");
    let (w, h) = (img.width, img.height);
    let mut gxx = vec![0.0; w * h];
    let mut gyy = vec![0.0; w * h];
    let mut gxy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let p = |dx: isize, dy: isize| img.get_reflect(xi + dx, yi + dy);
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let i = y * w + x;
            gxx[i] = gx * gx;
            gyy[i] = gy * gy;
            gxy[i] = gx * gy;
        }
    }
    let sxx = Integral::new(&gxx, w, h);
    let syy = Integral::new(&gyy, w, h);
    let sxy = Integral::new(&gxy, w, h);

    let cols = w.div_ceil(block_size);
    let rows = h.div_ceil(block_size);
    let mut angles = vec![0.0; cols * rows];
    let mut coherence = vec![0.0; cols * rows];
    let half = block_size / 2;
    for by in 0..rows {
        for bx in 0..cols {
            let x0 = (bx * block_size).saturating_sub(half);
            let y0 = (by * block_size).saturating_sub(half);
            let x1 = ((bx + 1) * block_size + half).min(w);
            let y1 = ((by + 1) * block_size + half).min(h);
            let a = sxx.sum(x0, y0, x1, y1);
            let b = syy.sum(x0, y0, x1, y1);
            let c = sxy.sum(x0, y0, x1, y1);
            let i = by * cols + bx;
            let total = a + b;
            if total <= 1e-9 {
                continue;
            }
            let num = ((a - b) * (a - b) + 4.0 * c * c).sqrt();
            coherence[i] = (num / total).clamp(0.0, 1.0);
            // Dominant gradient direction, rotated by 90 degrees to follow the ridge.
            angles[i] = wrap_pi(0.5 * (2.0 * c).atan2(a - b) + PI / 2.0);
        }
    }

    let coherent: Vec<usize> = (0..cols * rows)
        .filter(|&i| coherence[i] >= COHERENCE_THRESHOLD)
        .collect();
    let mut filled = angles.clone();
    if !coherent.is_empty() {
        for i in 0..cols * rows {
            if coherence[i] >= COHERENCE_THRESHOLD {
                continue;
            }
            let (bx, by) = ((i % cols) as isize, (i / cols) as isize);
            // Nearest coherent block; ties go to the earliest in raster order.
            let nearest = coherent
                .iter()
                .min_by_key(|&&j| {
                    let dx = (j % cols) as isize - bx;
                    let dy = (j / cols) as isize - by;
                    (dx * dx + dy * dy, j)
                })
                .copied()
                .expect("non-empty");
            filled[i] = angles[nearest];
        }
    }

    // One whole-grid 3x3 doubled-angle smoothing pass, weighted by
    // coherence with a floor so infilled blocks still contribute.
    let mut smoothed = vec![0.0; cols * rows];
    for by in 0..rows {
        for bx in 0..cols {
            let mut c = 0.0;
            let mut s = 0.0;
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (nx, ny) = (bx as isize + dx, by as isize + dy);
                    if nx < 0 || ny < 0 || nx >= cols as isize || ny >= rows as isize {
                        continue;
                    }
                    let j = ny as usize * cols + nx as usize;
                    let wgt = coherence[j].max(0.05) * if dx == 0 && dy == 0 { 2.0 } else { 1.0 };
                    c += wgt * (2.0 * filled[j]).cos();
                    s += wgt * (2.0 * filled[j]).sin();
                }
            }
            let i = by * cols + bx;
            smoothed[i] = if c.abs() + s.abs() < 1e-12 {
                filled[i]
            } else {
                wrap_pi(0.5 * s.atan2(c))
            };
        }
    }
    if coherent.is_empty() {
        smoothed = angles;
    }

    OrientationField {
        block_size,
        cols,
        rows,
        angles: smoothed,
        coherence,
    }
}

/// Summed-area table.
struct Integral {
    w: usize,
    table: Vec<f64>,
}

impl Integral {
    fn new(data: &[f64], w: usize, h: usize) -> Self {
        let mut table = vec![0.0; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += data[y * w + x];
                table[(y + 1) * (w + 1) + x + 1] = table[y * (w + 1) + x + 1] + row;
            }
        }
        Self { w, table }
    }

    /// Sum over `[x0, x1) x [y0, y1)`.
    fn sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let s = self.w + 1;
        self.table[y1 * s + x1] - self.table[y0 * s + x1] - self.table[y1 * s + x0]
            + self.table[y0 * s + x0]
    }
}
