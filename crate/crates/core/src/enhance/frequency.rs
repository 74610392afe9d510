use super::orientation::{block_center, OrientationField};
use super::{BlockMask, Plane};

/// Shortest admissible ridge period, pixels.
pub const MIN_PERIOD: f64 = 3.0;
/// Longest admissible ridge period, pixels.
pub const MAX_PERIOD: f64 = 25.0;

/// Block-wise ridge frequency in cycles per pixel; 0 marks unreliable
/// blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub block_size: usize,
    pub cols: usize,
    pub rows: usize,
    pub values: Vec<f64>,
}

impl FrequencyGrid {
    pub fn zeros(cols: usize, rows: usize, block_size: usize) -> Self {
        Self {
            block_size,
            cols,
            rows,
            values: vec![0.0; cols * rows],
        }
    }

    #[inline]
    pub fn at(&self, bx: usize, by: usize) -> f64 {
        self.values[by * self.cols + bx]
    }

    pub fn apply_mask(&mut self, mask: &BlockMask) {
        for (v, &m) in self.values.iter_mut().zip(&mask.cells) {
            if !m {
                *v = 0.0;
            }
        }
    }

    /// Copy with every masked block holding a usable frequency: unreliable
    /// blocks take the mean of reliable neighbours, spreading outwards, and
    /// fall back to the median of all reliable blocks. Used to tune filters
    /// only; the stored grid keeps its zeros.
    pub(crate) fn filled(&self, mask: &BlockMask) -> Vec<f64> {
        let mut vals = self.values.clone();
        let mut reliable: Vec<f64> = vals.iter().copied().filter(|&v| v > 0.0).collect();
        let fallback = if reliable.is_empty() {
            1.0 / 9.0
        } else {
            reliable.sort_by(|a, b| a.total_cmp(b));
            reliable[reliable.len() / 2]
        };
        loop {
            let mut next = vals.clone();
            let mut changed = false;
            for by in 0..self.rows {
                for bx in 0..self.cols {
                    let i = by * self.cols + bx;
                    if vals[i] > 0.0 || !mask.cells[i] {
                        continue;
                    }
                    let mut sum = 0.0;
                    let mut n = 0;
                    for (dx, dy) in super::NEIGHBORS_8 {
                        let (nx, ny) = (bx as isize + dx, by as isize + dy);
                        if nx < 0 || ny < 0 || nx >= self.cols as isize || ny >= self.rows as isize
                        {
                            continue;
                        }
                        let v = vals[ny as usize * self.cols + nx as usize];
                        if v > 0.0 {
                            sum += v;
                            n += 1;
                        }
                    }
                    if n > 0 {
                        next[i] = sum / n as f64;
                        changed = true;
                    }
                }
            }
            vals = next;
            if !changed {
                break;
            }
        }
        for (v, &m) in vals.iter_mut().zip(&mask.cells) {
            if m && *v <= 0.0 {
                *v = fallback;
            }
        }
        // 3x3 smoothing over masked blocks.
        let mut out = vals.clone();
        for by in 0..self.rows {
            for bx in 0..self.cols {
                let i = by * self.cols + bx;
                if !mask.cells[i] {
                    continue;
                }
                let mut sum = 0.0;
                let mut n = 0.0;
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let (nx, ny) = (bx as isize + dx, by as isize + dy);
                        if nx < 0 || ny < 0 || nx >= self.cols as isize || ny >= self.rows as isize
                        {
                            continue;
                        }
                        let j = ny as usize * self.cols + nx as usize;
                        if mask.cells[j] && vals[j] > 0.0 {
                            sum += vals[j];
                            n += 1.0;
                        }
                    }
                }
                if n > 0.0 {
                    out[i] = sum / n;
                }
            }
        }
        out
    }
}

/// Ridge frequency from the spacing of zero crossings of the oriented
/// x-signature: the mean-removed projection of a `window`-long strip
/// orthogonal to the ridges, averaged over one block along them.
/// Zero crossings make the estimate insensitive to image polarity.
pub fn estimate_frequency(img: &Plane, field: &OrientationField, window: usize) -> FrequencyGrid {
    let bs = field.block_size;
    let mut grid = FrequencyGrid::zeros(field.cols, field.rows, bs);
    for by in 0..field.rows {
        for bx in 0..field.cols {
            if field.coherence_at(bx, by) <= 0.0 {
                continue;
            }
            let theta = field.angle(bx, by);
            let (tx, ty) = (theta.cos(), theta.sin());
            let (nx, ny) = (-ty, tx);
            let (cx, cy) = block_center(bx, by, bs);
            let cx = cx.min(img.width as f64 - 1.0);
            let cy = cy.min(img.height as f64 - 1.0);
            let mut signature: Vec<Option<f64>> = Vec::with_capacity(window);
            for k in 0..window {
                let along = k as f64 - (window as f64 - 1.0) / 2.0;
                let mut sum = 0.0;
                let mut n = 0;
                for m in 0..bs {
                    let across = m as f64 - (bs as f64 - 1.0) / 2.0;
                    let px = cx + along * nx + across * tx;
                    let py = cy + along * ny + across * ty;
                    if let Some(v) = img.sample(px, py) {
                        sum += v;
                        n += 1;
                    }
                }
                signature.push(if n * 2 >= bs {
                    Some(sum / n as f64)
                } else {
                    None
                });
            }
            // Longest run of valid samples.
            let (mut best_start, mut best_len) = (0, 0);
            let mut start = 0;
            for k in 0..=signature.len() {
                if k == signature.len() || signature[k].is_none() {
                    if k - start > best_len {
                        best_start = start;
                        best_len = k - start;
                    }
                    start = k + 1;
                }
            }
            if best_len < 8 {
                continue;
            }
            let sig: Vec<f64> = signature[best_start..best_start + best_len]
                .iter()
                .map(|v| v.expect("valid run"))
                .collect();
            if let Some(period) = zero_crossing_period(&sig) {
                if (MIN_PERIOD..=MAX_PERIOD).contains(&period) {
                    grid.values[by * field.cols + bx] = 1.0 / period;
                }
            }
        }
    }
    grid
}

/// Mean spacing of zero crossings of the mean-removed signal, doubled.
pub(crate) fn zero_crossing_period(sig: &[f64]) -> Option<f64> {
    let mean = sig.iter().sum::<f64>() / sig.len() as f64;
    let centered: Vec<f64> = sig.iter().map(|v| v - mean).collect();
    let scale = centered.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale < 1e-6 {
        return None;
    }
    let mut crossings = Vec::new();
    for k in 1..centered.len() {
        let (a, b) = (centered[k - 1], centered[k]);
        if (a < 0.0 && b >= 0.0) || (a >= 0.0 && b < 0.0) {
            let t = if a == b { 0.0 } else { a / (a - b) };
            crossings.push(k as f64 - 1.0 + t);
        }
    }
    if crossings.len() < 3 {
        return None;
    }
    let span = crossings[crossings.len() - 1] - crossings[0];
    Some(2.0 * span / (crossings.len() - 1) as f64)
}
