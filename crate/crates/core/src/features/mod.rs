//! Minutiae and singular points, and the template that bundles them.

mod minutiae;
mod overlay;
mod singularity;
mod template_io;

use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::enhance::{self, EnhanceParams, Enhanced};
use crate::error::{Error, Result};
use crate::imaging::{GrayImage, Provenance};

pub use minutiae::{assign_quality, crossing_number, extract_minutiae, filter_spurious};
pub use overlay::render_overlay;
pub use singularity::{detect_singularities, poincare_index};
pub use template_io::{
    format_template, parse_template, read_template, write_template, TEMPLATE_MAGIC,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MinutiaKind {
    Ending,
    Bifurcation,
}

impl MinutiaKind {
    pub fn opposite(self) -> Self {
        match self {
            MinutiaKind::Ending => MinutiaKind::Bifurcation,
            MinutiaKind::Bifurcation => MinutiaKind::Ending,
        }
    }
}

/// A located, oriented ridge anomaly. Coordinates are pixel column/row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Minutia {
    pub x: f64,
    pub y: f64,
    /// Direction in `[0, 2pi)`; for endings it points into the ridge, for
    /// bifurcations along the stem away from the fork.
    pub theta: f64,
    pub kind: MinutiaKind,
    pub quality: f64,
}

impl Minutia {
    pub fn new(x: f64, y: f64, theta: f64, kind: MinutiaKind) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
            kind,
            quality: 1.0,
        }
    }

    pub fn distance(&self, other: &Minutia) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Wraps an angle into `[0, 2pi)`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SingularityKind {
    Core,
    Delta,
}

/// Core or delta with its Poincaré index (+1/2 or -1/2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Singularity {
    pub x: f64,
    pub y: f64,
    pub kind: SingularityKind,
}

impl Singularity {
    pub fn new(x: f64, y: f64, kind: SingularityKind) -> Self {
        Self { x, y, kind }
    }

    pub fn index(&self) -> f64 {
        match self.kind {
            SingularityKind::Core => 0.5,
            SingularityKind::Delta => -0.5,
        }
    }
}

/// Whether a template came from the raw image (ridges) or its inverse
/// (valleys).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Ridge,
    Valley,
}

impl Channel {
    pub fn from_provenance(p: Provenance) -> Self {
        if p.inverted {
            Channel::Valley
        } else {
            Channel::Ridge
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Ridge => "ridge",
            Channel::Valley => "valley",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ridge" => Ok(Channel::Ridge),
            "valley" => Ok(Channel::Valley),
            other => Err(Error::InvalidParameter(format!(
                "unknown channel {other:?}"
            ))),
        }
    }
}

/// Extracted features of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub minutiae: Vec<Minutia>,
    pub singularities: Vec<Singularity>,
    pub width: usize,
    pub height: usize,
    pub channel: Channel,
    pub source_id: String,
}

impl Template {
    pub fn len(&self) -> usize {
        self.minutiae.len()
    }

    pub fn is_empty(&self) -> bool {
        self.minutiae.is_empty()
    }
}

/// Validates and assembles a template. Exact duplicates (same position and
/// kind) collapse to one entry; when their directions disagree the higher
/// quality one wins and a warning is logged.
pub fn build_template(
    minutiae: Vec<Minutia>,
    singularities: Vec<Singularity>,
    dims: (usize, usize),
    channel: Channel,
    source_id: impl Into<String>,
) -> Result<Template> {
    let (width, height) = dims;
    let source_id = source_id.into();
    let inside = |x: f64, y: f64| x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64;
    let mut kept: Vec<Minutia> = Vec::with_capacity(minutiae.len());
    for mut m in minutiae {
        if !inside(m.x, m.y) {
            return Err(Error::InvalidParameter(format!(
                "minutia ({}, {}) outside {width}x{height} image",
                m.x, m.y
            )));
        }
        if !(0.0..=1.0).contains(&m.quality) {
            return Err(Error::InvalidParameter(format!(
                "minutia quality {} outside [0, 1]",
                m.quality
            )));
        }
        if !m.theta.is_finite() {
            return Err(Error::InvalidParameter(
                "minutia direction is not finite".into(),
            ));
        }
        m.theta = normalize_angle(m.theta);
        match kept
            .iter_mut()
            .find(|k| k.x == m.x && k.y == m.y && k.kind == m.kind)
        {
            Some(existing) => {
                if existing.theta != m.theta {
                    log::warn!(
                        "{source_id}: conflicting duplicate minutia at ({}, {}), keeping the higher quality one",
                        m.x,
                        m.y
                    );
                    if m.quality > existing.quality {
                        *existing = m;
                    }
                }
            }
            None => kept.push(m),
        }
    }
    for s in &singularities {
        if !inside(s.x, s.y) {
            return Err(Error::InvalidParameter(format!(
                "singularity ({}, {}) outside image",
                s.x, s.y
            )));
        }
    }
    Ok(Template {
        minutiae: kept,
        singularities,
        width,
        height,
        channel,
        source_id,
    })
}

/// Parameters of minutiae post-processing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    /// Minimum spacing below which broken-ridge and spur pairs are removed.
    pub min_distance: f64,
    /// Minimum distance from the mask boundary.
    pub border: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            min_distance: 8.0,
            border: 10.0,
        }
    }
}

/// Everything produced while extracting a template, kept for debug dumps.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub template: Template,
    pub enhanced: Enhanced,
}

/// Enhancement, minutiae detection, filtering and singularity detection on
/// one grayscale image. The template channel follows the image provenance.
pub fn extract_template(
    img: &GrayImage,
    enhance_params: &EnhanceParams,
    feature_params: &FeatureParams,
    source_id: impl Into<String>,
) -> Result<Extraction> {
    let enhanced = enhance::enhance(img, enhance_params)?;
    let mut minutiae = extract_minutiae(&enhanced.maps);
    assign_quality(&mut minutiae, &enhanced.field);
    let minutiae = filter_spurious(
        &minutiae,
        &enhanced.maps,
        feature_params.min_distance,
        feature_params.border,
    );
    let singularities = detect_singularities(&enhanced.field, &enhanced.maps.mask);
    let template = build_template(
        minutiae,
        singularities,
        (img.width(), img.height()),
        Channel::from_provenance(img.provenance()),
        source_id,
    )?;
    Ok(Extraction { template, enhanced })
}

/// Smallest absolute difference between two directions in `[0, pi]`.
pub fn angle_between(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d).min(PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{invert, GraySource};

    #[test]
    fn empty_template_is_valid() {
        let t = build_template(vec![], vec![], (10, 10), Channel::Ridge, "a").unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn identical_minutiae_collapse() {
        let m = Minutia::new(3.0, 4.0, 1.0, MinutiaKind::Ending);
        let t = build_template(vec![m, m], vec![], (10, 10), Channel::Ridge, "a").unwrap();
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn conflicting_duplicate_keeps_higher_quality() {
        let mut a = Minutia::new(3.0, 4.0, 1.0, MinutiaKind::Ending);
        a.quality = 0.3;
        let mut b = Minutia::new(3.0, 4.0, 2.0, MinutiaKind::Ending);
        b.quality = 0.9;
        let c = Minutia::new(3.0, 4.0, 2.0, MinutiaKind::Bifurcation);
        let t = build_template(vec![a, b, c], vec![], (10, 10), Channel::Ridge, "a").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.minutiae[0].theta, 2.0);
    }

    #[test]
    fn rejects_out_of_image_features() {
        let m = Minutia::new(10.0, 4.0, 1.0, MinutiaKind::Ending);
        assert!(build_template(vec![m], vec![], (10, 10), Channel::Ridge, "a").is_err());
    }

    #[test]
    fn channel_follows_provenance() {
        let img = GrayImage::from_fn(4, 4, |x, _| x as f64).unwrap();
        assert_eq!(Channel::from_provenance(img.provenance()), Channel::Ridge);
        assert_eq!(
            Channel::from_provenance(invert(&img).provenance()),
            Channel::Valley
        );
        let luma = Provenance::plain(GraySource::Luma);
        assert_eq!(Channel::from_provenance(luma), Channel::Ridge);
    }

    #[test]
    fn angle_helpers() {
        assert!((normalize_angle(-0.5) - (TAU - 0.5)).abs() < 1e-12);
        assert!((angle_between(0.1, TAU - 0.1) - 0.2).abs() < 1e-12);
        assert_eq!(MinutiaKind::Ending.opposite(), MinutiaKind::Bifurcation);
    }
}
