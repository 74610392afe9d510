//! Synthetic fingerprints with known minutiae and singular points.
//!
//! A pattern is a phase field: a smooth carrier whose level sets are the
//! ridges, plus one spiral phase term per injected minutia. The height map
//! is `cos(2pi * phase)`, so crests sit at integer phase.

mod corpus;
mod field;
mod perturb;
mod render;

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{normalize_angle, Minutia, MinutiaKind, Singularity, SingularityKind};

pub use corpus::{generate_corpus, write_corpus, CorpusSample, CorpusSpec, RenderMode};
pub use field::{Carrier, Dislocation, PhaseField};
pub use perturb::{perturb_impression, perturb_impression_with_transform, RigidTransform};
pub use render::{
    render_color, render_contact, render_contactless, IlluminationParams, DARK_SKIN_TINT,
};

/// Admissible ridge periods, pixels.
pub const PERIOD_RANGE: (f64, f64) = (6.0, 12.0);
/// Smallest admissible side length, pixels.
pub const MIN_SIDE: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    Uniform,
    Arch,
    Core,
    Delta,
    Whorl,
}

impl PatternKind {
    pub const ALL: [PatternKind; 5] = [
        PatternKind::Uniform,
        PatternKind::Arch,
        PatternKind::Core,
        PatternKind::Delta,
        PatternKind::Whorl,
    ];
}

impl std::str::FromStr for PatternKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(PatternKind::Uniform),
            "arch" => Ok(PatternKind::Arch),
            "core" => Ok(PatternKind::Core),
            "delta" => Ok(PatternKind::Delta),
            "whorl" => Ok(PatternKind::Whorl),
            other => Err(Error::InvalidParameter(format!(
                "unknown pattern kind {other:?}"
            ))),
        }
    }
}

/// What to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSpec {
    pub kind: PatternKind,
    /// Ridge period, pixels.
    pub period: f64,
    pub width: usize,
    pub height: usize,
    /// Number of minutiae to inject; fewer are placed when the area cannot
    /// hold them at the required spacing.
    pub minutiae: usize,
}

impl PatternSpec {
    pub fn new(kind: PatternKind, period: f64, dims: (usize, usize), minutiae: usize) -> Self {
        Self {
            kind,
            period,
            width: dims.0,
            height: dims.1,
            minutiae,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(PERIOD_RANGE.0..=PERIOD_RANGE.1).contains(&self.period) {
            return Err(Error::InvalidParameter(format!(
                "period {} outside [{}, {}]",
                self.period, PERIOD_RANGE.0, PERIOD_RANGE.1
            )));
        }
        if self.width < MIN_SIDE || self.height < MIN_SIDE {
            return Err(Error::InvalidParameter(format!(
                "dimensions {}x{} below {MIN_SIDE}x{MIN_SIDE}",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Ridge surface height in `[-1, 1]`, crest at `+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl HeightMap {
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
}

/// Known features of a generated pattern, in image coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub kind: PatternKind,
    pub period: f64,
    pub width: usize,
    pub height: usize,
    pub minutiae: Vec<Minutia>,
    pub singularities: Vec<Singularity>,
    pub field: PhaseField,
    /// Pose applied after generation; identity for a fresh pattern.
    pub transform: RigidTransform,
}

impl GroundTruth {
    /// Ridge orientation in `[0, pi)` at image point `(x, y)`.
    pub fn orientation_at(&self, x: f64, y: f64) -> f64 {
        let (sx, sy) = self.transform.inverse_point(x, y);
        (self.field.orientation(sx, sy) + self.transform.angle).rem_euclid(PI)
    }

    /// Ground truth after moving the image by `t`; features that leave the
    /// image are dropped.
    pub fn transformed(&self, t: &RigidTransform) -> GroundTruth {
        let inside = |x: f64, y: f64| {
            x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
        };
        let minutiae = self
            .minutiae
            .iter()
            .filter_map(|m| {
                let (x, y) = t.apply_point(m.x, m.y);
                inside(x, y).then(|| Minutia {
                    x,
                    y,
                    theta: normalize_angle(m.theta + t.angle),
                    ..*m
                })
            })
            .collect();
        let singularities = self
            .singularities
            .iter()
            .filter_map(|s| {
                let (x, y) = t.apply_point(s.x, s.y);
                inside(x, y).then_some(Singularity { x, y, kind: s.kind })
            })
            .collect();
        GroundTruth {
            minutiae,
            singularities,
            transform: t.compose(&self.transform),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Builds the carrier for `kind` with seeded placement and returns it with
/// its singular points.
fn make_carrier(spec: &PatternSpec, rng: &mut ChaCha8Rng) -> (Carrier, Vec<Singularity>) {
    let (w, h) = (spec.width as f64, spec.height as f64);
    let t = spec.period;
    let cx = w / 2.0 + rng.random_range(-0.1..0.1) * w;
    let cy = h / 2.0 + rng.random_range(-0.1..0.1) * h;
    match spec.kind {
        PatternKind::Uniform => (
            Carrier::Linear {
                angle: rng.random_range(0.0..PI),
                offset: rng.random_range(0.0..1.0),
            },
            vec![],
        ),
        PatternKind::Arch => (
            Carrier::Arch {
                cx,
                cy,
                rotation: rng.random_range(-0.3..0.3),
                amplitude: rng.random_range(0.12..0.2) * h,
                spread: rng.random_range(0.2..0.3) * w,
            },
            vec![],
        ),
        PatternKind::Core => (
            Carrier::Loop {
                cx,
                cy,
                direction: PI / 2.0 + rng.random_range(-0.4..0.4),
            },
            vec![Singularity::new(cx, cy, SingularityKind::Core)],
        ),
        PatternKind::Delta => (
            Carrier::Delta {
                cx,
                cy,
                rotation: -PI / 2.0 + rng.random_range(-0.4..0.4),
            },
            vec![Singularity::new(cx, cy, SingularityKind::Delta)],
        ),
        PatternKind::Whorl => {
            let half = 0.5 * rng.random_range(2.5..3.5) * t;
            let a = rng.random_range(0.0..PI);
            let (dx, dy) = (half * a.cos(), half * a.sin());
            (
                Carrier::Whorl {
                    ax: cx - dx,
                    ay: cy - dy,
                    bx: cx + dx,
                    by: cy + dy,
                },
                vec![
                    Singularity::new(cx - dx, cy - dy, SingularityKind::Core),
                    Singularity::new(cx + dx, cy + dy, SingularityKind::Core),
                ],
            )
        }
    }
}

/// Whether the carrier is smooth with near-nominal spacing around `(x, y)`.
fn carrier_is_regular(field: &PhaseField, x: f64, y: f64) -> bool {
    let t = field.period;
    let (gx, gy) = field.carrier_gradient(x, y);
    let base = gy.atan2(gx);
    let r = 1.5 * t;
    for (px, py) in [(x, y), (x + r, y), (x - r, y), (x, y + r), (x, y - r)] {
        let (ax, ay) = field.carrier_gradient(px, py);
        let mag = ax.hypot(ay) * t;
        if !(0.8..=1.25).contains(&mag) {
            return false;
        }
        let d = (ay.atan2(ax) - base).rem_euclid(TAU);
        if d.min(TAU - d) > 25f64.to_radians() {
            return false;
        }
    }
    true
}

/// Target phase of the side with one ridge fewer: a crest continues into a
/// bifurcation, a valley into an ending.
fn target_phase(kind: MinutiaKind) -> f64 {
    match kind {
        MinutiaKind::Bifurcation => 0.0,
        MinutiaKind::Ending => 0.5,
    }
}

fn wrap_half(v: f64) -> f64 {
    v - v.round()
}

/// Generates a height map and its ground truth. Equal `spec` and `seed`
/// give bit-identical output.
pub fn generate_ridge_pattern(spec: &PatternSpec, seed: u64) -> Result<(HeightMap, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (carrier, singularities) = make_carrier(spec, &mut rng);
    let t = spec.period;
    let mut field = PhaseField {
        period: t,
        carrier,
        dislocations: Vec::new(),
    };
    let (w, h) = (spec.width as f64, spec.height as f64);
    let margin = (2.5 * t).max(24.0);
    let spacing = (3.0 * t).max(24.0);
    let mut kinds = Vec::new();
    let mut attempts = 0;
    while kinds.len() < spec.minutiae && attempts < 400 * spec.minutiae.max(1) {
        attempts += 1;
        let x = rng.random_range(margin..w - margin);
        let y = rng.random_range(margin..h - margin);
        let crowded = field
            .dislocations
            .iter()
            .any(|d| (d.x - x).hypot(d.y - y) < spacing);
        let near_singular = singularities
            .iter()
            .any(|s| (s.x - x).hypot(s.y - y) < 3.0 * t);
        if crowded || near_singular || !carrier_is_regular(&field, x, y) {
            continue;
        }
        let kind = if rng.random_bool(0.5) {
            MinutiaKind::Ending
        } else {
            MinutiaKind::Bifurcation
        };
        let polarity = if rng.random_bool(0.5) { 1 } else { -1 };
        field.dislocations.push(Dislocation { x, y, polarity });
        kinds.push(kind);
    }
    settle_dislocations(&mut field, &kinds);

    let minutiae = field
        .dislocations
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let (gx, gy) = field.gradient_excluding(d.x, d.y, i);
            let s = f64::from(d.polarity);
            // Tangent pointing to the side with one ridge fewer.
            let (ux, uy) = (-s * gy, s * gx);
            let along = uy.atan2(ux);
            let theta = match kinds[i] {
                MinutiaKind::Bifurcation => along,
                MinutiaKind::Ending => along + PI,
            };
            Minutia::new(d.x, d.y, theta, kinds[i])
        })
        .collect();

    let height = HeightMap::from_fn(spec.width, spec.height, |x, y| {
        (TAU * field.phase(x as f64, y as f64)).cos()
    });
    let truth = GroundTruth {
        kind: spec.kind,
        period: t,
        width: spec.width,
        height: spec.height,
        minutiae,
        singularities,
        field,
        transform: RigidTransform::identity(),
    };
    Ok((height, truth))
}

/// Shifts each dislocation across the ridges until the phase on its
/// fewer-ridge side matches the crest/valley target of its kind.
fn settle_dislocations(field: &mut PhaseField, kinds: &[MinutiaKind]) {
    for _ in 0..100 {
        let mut worst: f64 = 0.0;
        for (i, &kind) in kinds.iter().enumerate() {
            let d = field.dislocations[i];
            let (gx, gy) = field.gradient_excluding(d.x, d.y, i);
            let g = gx.hypot(gy);
            if g == 0.0 {
                continue;
            }
            let s = f64::from(d.polarity);
            let (ux, uy) = (-s * gy, s * gx);
            let own = s * uy.atan2(ux) / TAU;
            let err = wrap_half(field.phase_excluding(d.x, d.y, i) + own - target_phase(kind));
            worst = worst.max(err.abs());
            let step = -err / g;
            field.dislocations[i].x += step * gx / g;
            field.dislocations[i].y += step * gy / g;
        }
        if worst < 1e-6 {
            break;
        }
    }
}
