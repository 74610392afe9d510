//! Fingerprint enhancement: normalization, segmentation, orientation and
//! frequency estimation, Gabor filtering, binarization and thinning.

mod frequency;
mod gabor;
mod orientation;
mod segment;
mod thinning;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{GrayImage, Provenance};

pub use frequency::{estimate_frequency, FrequencyGrid, MAX_PERIOD, MIN_PERIOD};
pub use gabor::gabor_enhance;
pub use orientation::{estimate_orientation, OrientationField, COHERENCE_THRESHOLD};
pub use segment::{segment, BlockMask};
pub use thinning::{binarize_and_thin, thin};

/// Real-valued working plane without the `[0, 255]` restriction of
/// [`GrayImage`]; intermediate enhancement results live here.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sample with mirrored borders.
    #[inline]
    pub fn get_reflect(&self, x: isize, y: isize) -> f64 {
        self.get(reflect(x, self.width), reflect(y, self.height))
    }

    /// Bilinear sample; `None` outside the image.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        if !(x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64)
        {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64
    }
}

impl From<&GrayImage> for Plane {
    fn from(img: &GrayImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            data: img.data().to_vec(),
        }
    }
}

#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

/// Row-major boolean raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Out-of-bounds reads are background.
    #[inline]
    pub fn get_i(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.get(x as usize, y as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Ridge pixels black on white, the usual fingerprint rendering.
    pub fn to_gray(&self) -> GrayImage {
        let data = self
            .data
            .iter()
            .map(|&b| if b { 0.0 } else { 255.0 })
            .collect();
        GrayImage::new(
            self.width,
            self.height,
            data,
            Provenance::plain(crate::imaging::GraySource::External),
        )
        .expect("binary image is always in range")
    }

    /// Number of 8-connected foreground components.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.data.len()];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..self.data.len() {
            if !self.data[start] || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(i) = stack.pop() {
                let (x, y) = ((i % self.width) as isize, (i / self.width) as isize);
                for (dx, dy) in NEIGHBORS_8 {
                    let (nx, ny) = (x + dx, y + dy);
                    if self.get_i(nx, ny) {
                        let j = ny as usize * self.width + nx as usize;
                        if !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        count
    }
}

/// Eight-neighborhood offsets in ring order starting east and turning
/// towards north (counter-clockwise on screen).
pub const NEIGHBORS_8: [(isize, isize); 8] = [
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Intermediate and final products of enhancement.
#[derive(Debug, Clone)]
pub struct RidgeMaps {
    /// Ridge frequency per block in cycles/pixel, 0 where unreliable or
    /// outside the mask.
    pub frequency: FrequencyGrid,
    pub mask: BlockMask,
    /// Ridge pixels (`true`) after binarizing the Gabor response.
    pub binary: BinaryImage,
    /// One-pixel-wide ridge skeleton.
    pub skeleton: BinaryImage,
}

impl RidgeMaps {
    pub fn width(&self) -> usize {
        self.binary.width
    }

    pub fn height(&self) -> usize {
        self.binary.height
    }
}

/// Tunable parameters of the enhancement pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnhanceParams {
    pub block_size: usize,
    pub target_mean: f64,
    pub target_var: f64,
    /// Block variance threshold on the normalized image.
    pub var_threshold: f64,
    /// Length of the frequency signature, in pixels.
    pub frequency_window: usize,
    /// Gabor envelope width as a fraction of the local ridge period.
    pub gabor_sigma_ratio: f64,
}

impl Default for EnhanceParams {
    fn default() -> Self {
        Self {
            block_size: 16,
            target_mean: 128.0,
            target_var: 2000.0,
            var_threshold: 400.0,
            frequency_window: 40,
            gabor_sigma_ratio: 0.5,
        }
    }
}

impl EnhanceParams {
    pub fn validate(&self) -> Result<()> {
        if self.block_size < 8 {
            return Err(Error::InvalidParameter(
                "block_size must be at least 8".into(),
            ));
        }
        // Written so that NaN fails every check.
        let positive = |v: f64| v > 0.0;
        if !positive(self.target_var)
            || !(positive(self.var_threshold) || self.var_threshold == 0.0)
            || !positive(self.gabor_sigma_ratio)
        {
            return Err(Error::InvalidParameter(
                "enhancement variances and ratios must be positive".into(),
            ));
        }
        if self.frequency_window < 8 {
            return Err(Error::InvalidParameter(
                "frequency_window must be at least 8".into(),
            ));
        }
        Ok(())
    }
}

/// Everything enhancement produces for one image.
#[derive(Debug, Clone)]
pub struct Enhanced {
    pub field: OrientationField,
    pub maps: RidgeMaps,
    pub response: Plane,
}

/// Mean/variance normalization. The result is clamped to `[0, 255]`; use
/// [`normalize_plane`] for the unclamped transform.
pub fn normalize(img: &GrayImage, target_mean: f64, target_var: f64) -> Result<GrayImage> {
    let plane = normalize_plane(&Plane::from(img), target_mean, target_var)?;
    GrayImage::from_clamped(plane.width, plane.height, plane.data, img.provenance())
}

/// `out = target_mean + (v - mean) * sqrt(target_var / var)`.
pub fn normalize_plane(plane: &Plane, target_mean: f64, target_var: f64) -> Result<Plane> {
    let mean = plane.mean();
    let var = plane.variance();
    if var.is_nan() || var <= 1e-12 {
        return Err(Error::Degenerate(
            "cannot normalize an image with zero variance".into(),
        ));
    }
    let gain = (target_var / var).sqrt();
    Ok(Plane {
        width: plane.width,
        height: plane.height,
        data: plane
            .data
            .iter()
            .map(|v| target_mean + (v - mean) * gain)
            .collect(),
    })
}

/// Full enhancement chain for one grayscale image.
pub fn enhance(img: &GrayImage, params: &EnhanceParams) -> Result<Enhanced> {
    params.validate()?;
    let normalized = normalize_plane(&Plane::from(img), params.target_mean, params.target_var)?;
    let mask = segment(&normalized, params.block_size, params.var_threshold);
    let field = estimate_orientation(&normalized, params.block_size);
    let mut freq = estimate_frequency(&normalized, &field, params.frequency_window);
    freq.apply_mask(&mask);
    let response =
        gabor::gabor_enhance_with(&normalized, &field, &freq, &mask, params.gabor_sigma_ratio);
    let mut maps = binarize_and_thin(&response, &mask);
    maps.frequency = freq;
    Ok(Enhanced {
        field,
        maps,
        response,
    })
}
