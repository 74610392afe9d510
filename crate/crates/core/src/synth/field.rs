use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

/// Smooth phase whose level sets are the unperturbed ridges. Distance-based
/// carriers add half a cycle so the singular set lies in a valley.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Carrier {
    /// Parallel ridges running along `angle`.
    Linear { angle: f64, offset: f64 },
    /// Ridges bent upwards by a Gaussian bump.
    Arch {
        cx: f64,
        cy: f64,
        rotation: f64,
        amplitude: f64,
        spread: f64,
    },
    /// Distance to a ray: ridges turn around the ray's origin (a core).
    Loop { cx: f64, cy: f64, direction: f64 },
    /// Distance to three rays 120 degrees apart: a triradius (a delta).
    Delta { cx: f64, cy: f64, rotation: f64 },
    /// Distance to a segment: closed ridges around two cores.
    Whorl { ax: f64, ay: f64, bx: f64, by: f64 },
}

fn distance_to_ray(x: f64, y: f64, cx: f64, cy: f64, dir: f64) -> f64 {
    let (dx, dy) = (dir.cos(), dir.sin());
    let t = ((x - cx) * dx + (y - cy) * dy).max(0.0);
    (x - cx - t * dx).hypot(y - cy - t * dy)
}

fn distance_to_segment(x: f64, y: f64, ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    let (vx, vy) = (bx - ax, by - ay);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 {
        (((x - ax) * vx + (y - ay) * vy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (x - ax - t * vx).hypot(y - ay - t * vy)
}

impl Carrier {
    /// Carrier phase in cycles.
    pub fn phase(&self, x: f64, y: f64, period: f64) -> f64 {
        match *self {
            Carrier::Linear { angle, offset } => {
                (-x * angle.sin() + y * angle.cos()) / period + offset
            }
            Carrier::Arch {
                cx,
                cy,
                rotation,
                amplitude,
                spread,
            } => {
                let (dx, dy) = (x - cx, y - cy);
                let (c, s) = (rotation.cos(), rotation.sin());
                let u = dx * c + dy * s;
                let v = -dx * s + dy * c;
                (v - amplitude * (-(u * u) / (2.0 * spread * spread)).exp()) / period
            }
            Carrier::Loop { cx, cy, direction } => {
                distance_to_ray(x, y, cx, cy, direction) / period + 0.5
            }
            Carrier::Delta { cx, cy, rotation } => {
                let d = (0..3)
                    .map(|k| distance_to_ray(x, y, cx, cy, rotation + k as f64 * TAU / 3.0))
                    .fold(f64::INFINITY, f64::min);
                d / period + 0.5
            }
            Carrier::Whorl { ax, ay, bx, by } => {
                distance_to_segment(x, y, ax, ay, bx, by) / period + 0.5
            }
        }
    }
}

/// One spiral phase term; `polarity` is `+1` or `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dislocation {
    pub x: f64,
    pub y: f64,
    pub polarity: i8,
}

/// Carrier plus dislocations; the full analytic description of a pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseField {
    pub period: f64,
    pub carrier: Carrier,
    pub dislocations: Vec<Dislocation>,
}

const FD_STEP: f64 = 0.25;

impl PhaseField {
    pub fn carrier_phase(&self, x: f64, y: f64) -> f64 {
        self.carrier.phase(x, y, self.period)
    }

    /// Central-difference gradient of the carrier phase, cycles per pixel.
    pub fn carrier_gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let h = FD_STEP;
        let gx = (self.carrier_phase(x + h, y) - self.carrier_phase(x - h, y)) / (2.0 * h);
        let gy = (self.carrier_phase(x, y + h) - self.carrier_phase(x, y - h)) / (2.0 * h);
        (gx, gy)
    }

    fn spiral(d: &Dislocation, x: f64, y: f64) -> f64 {
        f64::from(d.polarity) * (y - d.y).atan2(x - d.x) / TAU
    }

    fn spiral_gradient(d: &Dislocation, x: f64, y: f64) -> (f64, f64) {
        let (dx, dy) = (x - d.x, y - d.y);
        let r2 = dx * dx + dy * dy;
        if r2 == 0.0 {
            return (0.0, 0.0);
        }
        let s = f64::from(d.polarity) / (TAU * r2);
        (-dy * s, dx * s)
    }

    /// Full phase in cycles; defined modulo 1.
    pub fn phase(&self, x: f64, y: f64) -> f64 {
        self.carrier_phase(x, y)
            + self
                .dislocations
                .iter()
                .map(|d| Self::spiral(d, x, y))
                .sum::<f64>()
    }

    pub(crate) fn phase_excluding(&self, x: f64, y: f64, skip: usize) -> f64 {
        self.carrier_phase(x, y)
            + self
                .dislocations
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != skip)
                .map(|(_, d)| Self::spiral(d, x, y))
                .sum::<f64>()
    }

    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        self.gradient_excluding(x, y, usize::MAX)
    }

    pub(crate) fn gradient_excluding(&self, x: f64, y: f64, skip: usize) -> (f64, f64) {
        let (mut gx, mut gy) = self.carrier_gradient(x, y);
        for (i, d) in self.dislocations.iter().enumerate() {
            if i == skip {
                continue;
            }
            let (sx, sy) = Self::spiral_gradient(d, x, y);
            gx += sx;
            gy += sy;
        }
        (gx, gy)
    }

    /// Ridge orientation in `[0, pi)`: perpendicular to the phase gradient.
    pub fn orientation(&self, x: f64, y: f64) -> f64 {
        let (gx, gy) = self.gradient(x, y);
        (gy.atan2(gx) + PI / 2.0).rem_euclid(PI)
    }
}
