use serde::{Deserialize, Serialize};

use super::HeightMap;
use crate::error::{Error, Result};
use crate::imaging::{ColorImage, GrayImage, GraySource, Provenance};

/// Directional light over the ridge surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IlluminationParams {
    /// Direction of the light in the image plane, radians, image axes.
    pub azimuth: f64,
    /// Angle above the image plane, radians, in `(0, pi/2]`.
    pub elevation: f64,
    /// Unshaded fraction of the intensity, `[0, 1]`.
    pub ambient: f64,
    /// Height of a crest above the mean surface, pixels.
    pub ridge_height: f64,
}

impl Default for IlluminationParams {
    fn default() -> Self {
        Self {
            azimuth: 0.0,
            elevation: std::f64::consts::FRAC_PI_6,
            ambient: 0.1,
            ridge_height: 1.5,
        }
    }
}

impl IlluminationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.elevation > 0.0 && self.elevation <= std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidParameter(format!(
                "elevation {} outside (0, pi/2]",
                self.elevation
            )));
        }
        if !(0.0..=1.0).contains(&self.ambient) {
            return Err(Error::InvalidParameter(format!(
                "ambient {} outside [0, 1]",
                self.ambient
            )));
        }
        if !(self.ridge_height.is_finite() && self.ridge_height >= 0.0) {
            return Err(Error::InvalidParameter(
                "ridge height must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Contact-style rendering: crest (h = +1) at 0, valley floor (h = -1) at
/// 255.
pub fn render_contact(map: &HeightMap) -> GrayImage {
    let data = map.data.iter().map(|&h| 127.5 * (1.0 - h)).collect();
    GrayImage::from_clamped(
        map.width,
        map.height,
        data,
        Provenance::plain(GraySource::External),
    )
    .expect("height map dimensions are valid")
}

/// Lambertian shading of the surface `z = ridge_height * h`:
/// `255 * (ambient + (1 - ambient) * max(0, n.l))`.
pub fn render_contactless(map: &HeightMap, light: &IlluminationParams) -> Result<GrayImage> {
    light.validate()?;
    let (w, h) = (map.width, map.height);
    let l = [
        light.elevation.cos() * light.azimuth.cos(),
        light.elevation.cos() * light.azimuth.sin(),
        light.elevation.sin(),
    ];
    let at = |x: isize, y: isize| {
        map.get(
            x.clamp(0, w as isize - 1) as usize,
            y.clamp(0, h as isize - 1) as usize,
        )
    };
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let zx = light.ridge_height * (at(x + 1, y) - at(x - 1, y)) / 2.0;
            let zy = light.ridge_height * (at(x, y + 1) - at(x, y - 1)) / 2.0;
            let norm = (zx * zx + zy * zy + 1.0).sqrt();
            let dot = (-zx * l[0] - zy * l[1] + l[2]) / norm;
            data.push(255.0 * (light.ambient + (1.0 - light.ambient) * dot.max(0.0)));
        }
    }
    GrayImage::from_clamped(w, h, data, Provenance::plain(GraySource::External))
}

/// Reflectance of a dark skin capture: every channel stays below
/// mid-range.
pub const DARK_SKIN_TINT: [f64; 3] = [0.42, 0.3, 0.24];

/// Colour version of a grayscale render, each channel scaled by `tint`.
pub fn render_color(img: &GrayImage, tint: [f64; 3]) -> Result<ColorImage> {
    if tint.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidParameter(
            "tint components must lie in [0, 1]".into(),
        ));
    }
    ColorImage::from_fn(img.width(), img.height(), |x, y| {
        let v = img.get(x, y);
        [v * tint[0], v * tint[1], v * tint[2]]
    })
}
