use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    generate_ridge_pattern, perturb_impression_with_transform, render_color, render_contact,
    render_contactless, GroundTruth, IlluminationParams, PatternKind, PatternSpec, DARK_SKIN_TINT,
};
use crate::error::{Error, Result};
use crate::imaging::{ColorImage, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum RenderMode {
    Contact,
    Contactless(IlluminationParams),
}

/// Layout and variability of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub fingers: usize,
    pub impressions: usize,
    pub width: usize,
    pub height: usize,
    /// Ridge periods are drawn uniformly from this range, pixels.
    pub period_min: f64,
    pub period_max: f64,
    pub minutiae: usize,
    pub render: RenderMode,
    /// Also produce dark colour renders.
    pub color: bool,
    pub max_shift: f64,
    pub max_rot: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            fingers: 10,
            impressions: 3,
            width: 256,
            height: 256,
            period_min: 8.0,
            period_max: 10.0,
            minutiae: 30,
            render: RenderMode::Contact,
            color: false,
            max_shift: 8.0,
            max_rot: 0.15,
            noise_sigma: 6.0,
            seed: 1,
        }
    }
}

/// One rendered impression with its ground truth in image coordinates.
#[derive(Debug, Clone)]
pub struct CorpusSample {
    pub subject: String,
    pub finger: String,
    /// 1-based impression number.
    pub sample: usize,
    pub image: GrayImage,
    pub color: Option<ColorImage>,
    pub truth: GroundTruth,
}

impl CorpusSample {
    /// `<subject>_<finger>_<sample>`, the manifest naming scheme.
    pub fn stem(&self) -> String {
        format!("{}_{}_{}", self.subject, self.finger, self.sample)
    }
}

fn finger(spec: &CorpusSpec, index: usize) -> Result<Vec<CorpusSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let kind = PatternKind::ALL[rng.random_range(0..PatternKind::ALL.len())];
    let period = if spec.period_max > spec.period_min {
        rng.random_range(spec.period_min..spec.period_max)
    } else {
        spec.period_min
    };
    let pattern_seed: u64 = rng.random();
    let (map, truth) = generate_ridge_pattern(
        &PatternSpec::new(kind, period, (spec.width, spec.height), spec.minutiae),
        pattern_seed,
    )?;
    let base = match &spec.render {
        RenderMode::Contact => render_contact(&map),
        RenderMode::Contactless(light) => render_contactless(&map, light)?,
    };
    let subject = format!("s{:03}", index + 1);
    (1..=spec.impressions)
        .map(|sample| {
            let seed: u64 = rng.random();
            let (image, t) = perturb_impression_with_transform(
                &base,
                seed,
                spec.max_shift,
                spec.max_rot,
                spec.noise_sigma,
            );
            let color = if spec.color {
                Some(render_color(&image, DARK_SKIN_TINT)?)
            } else {
                None
            };
            Ok(CorpusSample {
                subject: subject.clone(),
                finger: "1".to_string(),
                sample,
                image,
                color,
                truth: truth.transformed(&t),
            })
        })
        .collect()
}

/// Renders every finger and impression. Fingers are generated in parallel;
/// the output order and content depend only on `spec`.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Vec<CorpusSample>> {
    if spec.impressions == 0 {
        return Err(Error::InvalidParameter(
            "at least one impression per finger is required".into(),
        ));
    }
    if spec.period_max < spec.period_min {
        return Err(Error::InvalidParameter(
            "period_max below period_min".into(),
        ));
    }
    let per_finger: Vec<Vec<CorpusSample>> = (0..spec.fingers)
        .into_par_iter()
        .map(|i| finger(spec, i))
        .collect::<Result<_>>()?;
    Ok(per_finger.into_iter().flatten().collect())
}

/// Writes `<stem>.png` (colour when available) and `<stem>.json` ground
/// truth per sample into `dir`; returns the image paths.
pub fn write_corpus(samples: &[CorpusSample], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    samples
        .par_iter()
        .map(|s| {
            let img_path = dir.join(format!("{}.png", s.stem()));
            match &s.color {
                Some(c) => c.save(&img_path)?,
                None => s.image.save(&img_path)?,
            }
            let gt_path = dir.join(format!("{}.json", s.stem()));
            std::fs::write(&gt_path, s.truth.to_json()?).map_err(|e| Error::io(&gt_path, e))?;
            Ok(img_path)
        })
        .collect()
}
