use std::f64::consts::{FRAC_PI_4, PI, TAU};

use ridgevalley::imaging::GrayImage;
use ridgevalley::synth::{
    generate_ridge_pattern, render_contact, render_contactless, HeightMap, IlluminationParams,
    PatternKind, PatternSpec,
};

fn correlation(a: &GrayImage, b: &GrayImage, cols: std::ops::Range<usize>) -> f64 {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for y in 0..a.height() {
        for x in cols.clone() {
            xs.push(a.get(x, y));
            ys.push(b.get(x, y));
        }
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Left half lit from `azimuth`, right half from the opposite side.
fn split_render(map: &HeightMap, azimuth: f64) -> GrayImage {
    let light = |a| IlluminationParams {
        azimuth: a,
        elevation: FRAC_PI_4,
        ..Default::default()
    };
    let left = render_contactless(map, &light(azimuth)).unwrap();
    let right = render_contactless(map, &light(azimuth + PI)).unwrap();
    let half = map.width / 2;
    GrayImage::from_fn(map.width, map.height, |x, y| {
        if x < half {
            left.get(x, y)
        } else {
            right.get(x, y)
        }
    })
    .unwrap()
}

#[test]
fn lit_flank_flips_with_the_light() {
    for seed in 0..4 {
        let spec = PatternSpec::new(PatternKind::Uniform, 10.0, (256, 256), 0);
        let (map, truth) = generate_ridge_pattern(&spec, seed).unwrap();
        let (gx, gy) = truth.field.gradient(128.0, 128.0);
        let img = split_render(&map, gy.atan2(gx));
        // Contact rendering of the profile a quarter period further along
        // the gradient: dark exactly on the flank facing the light.
        let shifted = HeightMap::from_fn(256, 256, |x, y| {
            (TAU * (truth.field.phase(x as f64, y as f64) + 0.25)).cos()
        });
        let quadrature = render_contact(&shifted);
        let (l, r) = (
            correlation(&img, &quadrature, 0..128),
            correlation(&img, &quadrature, 128..256),
        );
        assert!(l * r < 0.0, "seed {seed}: {l} {r}");
        assert!(l.abs() > 0.5 && r.abs() > 0.5, "seed {seed}: {l} {r}");
    }
}

#[test]
fn correlation_with_the_contact_render_vanishes_for_a_cosine_profile() {
    // Shading depends on the slope only, which is symmetric about the
    // mid-flank while the contact intensity is antisymmetric there, so the
    // literal per-half correlation is zero under any azimuth.
    let spec = PatternSpec::new(PatternKind::Uniform, 10.0, (256, 256), 0);
    let (map, truth) = generate_ridge_pattern(&spec, 2).unwrap();
    let (gx, gy) = truth.field.gradient(128.0, 128.0);
    let img = split_render(&map, gy.atan2(gx));
    let contact = render_contact(&map);
    for cols in [0..128, 128..256] {
        let c = correlation(&img, &contact, cols);
        assert!(c.abs() < 0.05, "{c}");
    }
}

#[test]
fn opposite_lights_anticorrelate() {
    let spec = PatternSpec::new(PatternKind::Whorl, 9.0, (256, 256), 10);
    let (map, _) = generate_ridge_pattern(&spec, 6).unwrap();
    let light = |a| IlluminationParams {
        azimuth: a,
        elevation: FRAC_PI_4,
        ..Default::default()
    };
    let a = render_contactless(&map, &light(0.3)).unwrap();
    let b = render_contactless(&map, &light(0.3 + PI)).unwrap();
    let c = correlation(&a, &b, 0..256);
    assert!(c < -0.3, "{c}");
}
