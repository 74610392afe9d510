use super::Plane;

/// Block-resolution foreground mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockMask {
    pub block_size: usize,
    /// Blocks per row.
    pub cols: usize,
    /// Blocks per column.
    pub rows: usize,
    /// Image width in pixels.
    pub width: usize,
    /// Image height in pixels.
    pub height: usize,
    pub cells: Vec<bool>,
}

impl BlockMask {
    pub fn full(width: usize, height: usize, block_size: usize) -> Self {
        let cols = width.div_ceil(block_size);
        let rows = height.div_ceil(block_size);
        Self {
            block_size,
            cols,
            rows,
            width,
            height,
            cells: vec![true; cols * rows],
        }
    }

    pub fn empty(width: usize, height: usize, block_size: usize) -> Self {
        let mut m = Self::full(width, height, block_size);
        m.cells.fill(false);
        m
    }

    #[inline]
    pub fn block(&self, bx: usize, by: usize) -> bool {
        self.cells[by * self.cols + bx]
    }

    /// Whether pixel `(x, y)` lies in a foreground block.
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        if !(x >= 0.0 && y >= 0.0 && x < self.width as f64 && y < self.height as f64) {
            return false;
        }
        self.block(x as usize / self.block_size, y as usize / self.block_size)
    }

    pub fn foreground_fraction(&self) -> f64 {
        self.cells.iter().filter(|&&c| c).count() as f64 / self.cells.len() as f64
    }

    /// Euclidean distance from `(x, y)` to the nearest pixel outside the
    /// mask; the area beyond the image border counts as outside.
    pub fn distance_to_background(&self, x: f64, y: f64) -> f64 {
        let mut best = x + 1.0;
        best = best.min(y + 1.0);
        best = best.min(self.width as f64 - x);
        best = best.min(self.height as f64 - y);
        let bs = self.block_size as f64;
        for by in 0..self.rows {
            for bx in 0..self.cols {
                if self.block(bx, by) {
                    continue;
                }
                let x0 = bx as f64 * bs;
                let y0 = by as f64 * bs;
                let x1 = ((bx + 1) * self.block_size).min(self.width) as f64 - 1.0;
                let y1 = ((by + 1) * self.block_size).min(self.height) as f64 - 1.0;
                let dx = (x0 - x).max(0.0).max(x - x1);
                let dy = (y0 - y).max(0.0).max(y - y1);
                best = best.min((dx * dx + dy * dy).sqrt());
            }
        }
        best.max(0.0)
    }

    fn morph(&self, dilate: bool) -> Self {
        let mut out = self.clone();
        for by in 0..self.rows {
            for bx in 0..self.cols {
                let mut acc = !dilate;
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let (nx, ny) = (bx as isize + dx, by as isize + dy);
                        if nx < 0 || ny < 0 || nx >= self.cols as isize || ny >= self.rows as isize
                        {
                            continue;
                        }
                        let v = self.block(nx as usize, ny as usize);
                        if dilate {
                            acc |= v;
                        } else {
                            acc &= v;
                        }
                    }
                }
                out.cells[by * self.cols + bx] = acc;
            }
        }
        out
    }

    /// Morphological closing followed by opening with a 3x3 block element.
    /// Out-of-grid neighbors are ignored so a full mask stays full.
    pub fn close_open(&self) -> Self {
        self.morph(true).morph(false).morph(false).morph(true)
    }
}

/// Foreground segmentation by block variance, cleaned by closing then
/// opening.
pub fn segment(img: &Plane, block_size: usize, var_threshold: f64) -> BlockMask {
    assert!(block_size >= 4, "block_size must be at least 4");
    let mut mask = BlockMask::empty(img.width, img.height, block_size);
    for by in 0..mask.rows {
        for bx in 0..mask.cols {
            let x0 = bx * block_size;
            let y0 = by * block_size;
            let x1 = (x0 + block_size).min(img.width);
            let y1 = (y0 + block_size).min(img.height);
            let n = ((x1 - x0) * (y1 - y0)) as f64;
            let mut sum = 0.0;
            let mut sq = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    let v = img.get(x, y);
                    sum += v;
                    sq += v * v;
                }
            }
            let mean = sum / n;
            let var = (sq / n - mean * mean).max(0.0);
            mask.cells[by * mask.cols + bx] = var > var_threshold;
        }
    }
    mask.close_open()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_empty_mask() {
        let p = Plane::from_fn(100, 80, |_, _| 128.0);
        let m = segment(&p, 16, 100.0);
        assert!(m.cells.iter().all(|&c| !c));
    }

    #[test]
    fn full_frame_pattern_has_full_mask() {
        let p = Plane::from_fn(130, 97, |x, _| 128.0 + 60.0 * (x as f64 * 0.8).sin());
        let m = segment(&p, 16, 100.0);
        assert_eq!((m.cols, m.rows), (9, 7));
        assert!(m.cells.iter().all(|&c| c));
    }

    #[test]
    fn distance_to_background_counts_image_border() {
        let m = BlockMask::full(64, 64, 16);
        assert_eq!(m.distance_to_background(2.0, 30.0), 3.0);
        let mut m = m;
        m.cells[4 + 1] = false; // block spanning 16..32
        assert!((m.distance_to_background(10.0, 20.0) - 6.0).abs() < 1e-12);
        assert_eq!(m.distance_to_background(20.0, 20.0), 0.0);
    }
}
