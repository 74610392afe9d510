//! One test per acceptance criterion. Each prints a single PASS/FAIL line to
//! stderr (bypassing the test harness capture) and then asserts.

use std::f64::consts::{FRAC_PI_4, TAU};
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use ridgevalley::enhance::{BlockMask, EnhanceParams, OrientationField};
use ridgevalley::experiment::{
    ingest, run_experiment, ExperimentConfig, FilenamePattern, Grayscale,
};
use ridgevalley::features::{
    detect_singularities, extract_template, Channel, FeatureParams, Minutia, MinutiaKind,
    SingularityKind, Template,
};
use ridgevalley::fusion_eval::{
    compute_eer, compute_roc, enumerate_pairs, LabeledSample, ScoreChannel, ScoreRecord, ScoreSet,
};
use ridgevalley::imaging::{
    invert, to_gray_luma, to_gray_ordinary, ColorImage, GammaParams, GrayImage,
};
use ridgevalley::matcher::{build_cylinders, match_templates, MatcherConfig};
use ridgevalley::synth::{
    generate_corpus, write_corpus, CorpusSpec, IlluminationParams, RenderMode,
};

fn line(n: u32, name: &str, pass: bool, elapsed: Duration, limit: Duration, detail: &str) -> bool {
    let ok = pass && elapsed <= limit;
    let verdict = if ok { "PASS" } else { "FAIL" };
    let mut e = std::io::stderr().lock();
    let _ = writeln!(
        e,
        "criterion {n} [{verdict}] {name}: {detail}; {:.2}s (limit {}s)",
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    ok
}

#[test]
fn criterion_1_grayscale_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 10_000;
    let px: Vec<[f64; 3]> = (0..n)
        .map(|_| [0; 3].map(|_: i32| f64::from(rng.random_range(0u8..=255))))
        .collect();
    let img = ColorImage::from_fn(n, 1, |x, _| px[x]).unwrap();
    let ordinary = to_gray_ordinary(&img);
    let luma = to_gray_luma(&img, GammaParams::new(1.0 / 2.2).unwrap());
    let mut worst: f64 = 0.0;
    for (i, [r, g, b]) in px.iter().copied().enumerate() {
        let want_o = 0.3 * r + 0.59 * g + 0.11 * b;
        let enc = |v: f64| 255.0 * (v / 255.0).powf(1.0 / 2.2);
        let want_l = 0.2126 * enc(r) + 0.7152 * enc(g) + 0.0722 * enc(b);
        worst = worst
            .max((ordinary.get(i, 0) - want_o).abs())
            .max((luma.get(i, 0) - want_l).abs());
    }
    let ok = line(
        1,
        "grayscale oracle equivalence",
        worst <= 1e-9,
        start.elapsed(),
        Duration::from_secs(1),
        &format!("max deviation {worst:e} over {n} triples"),
    );
    assert!(ok);
}

#[test]
fn criterion_2_pair_counts() {
    let start = Instant::now();
    let mut got = Vec::new();
    for (c, s) in [(336usize, 6usize), (1000, 2)] {
        let samples: Vec<LabeledSample> = (0..c)
            .flat_map(|i| {
                (0..s).map(move |k| LabeledSample {
                    id: format!("{i:04}_1_{k}"),
                    subject: format!("{i:04}"),
                    finger: "1".into(),
                })
            })
            .collect();
        let pairs = enumerate_pairs(&samples).unwrap();
        let declared = (pairs.genuine_count(), pairs.imposter_count());
        let (mut g, mut i) = (0u64, 0u64);
        for (_, _, genuine) in pairs {
            if genuine {
                g += 1;
            } else {
                i += 1;
            }
        }
        got.push((declared, (g, i)));
    }
    let want = [(5_040, 2_026_080), (1_000, 1_998_000)];
    let pass = got.iter().zip(want).all(|(&(d, s), w)| d == w && s == w);
    let ok = line(
        2,
        "pair-count reproduction",
        pass,
        start.elapsed(),
        Duration::from_secs(1),
        &format!(
            "336x6 -> {:?}, 1000x2 -> {:?} (declared, streamed)",
            got[0], got[1]
        ),
    );
    assert!(ok);
}

/// Threshold sweep over every distinct score, every midpoint and both
/// infinities, counting with binary searches on the sorted classes.
fn brute_force_eer(genuine: &[f64], imposter: &[f64]) -> f64 {
    let mut g = genuine.to_vec();
    let mut i = imposter.to_vec();
    g.sort_by(f64::total_cmp);
    i.sort_by(f64::total_cmp);
    let mut cands: Vec<f64> = g.iter().chain(&i).copied().collect();
    cands.sort_by(|a, b| b.total_cmp(a));
    cands.dedup();
    let mids: Vec<f64> = cands.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    cands.extend(mids);
    cands.push(f64::INFINITY);
    cands.push(f64::NEG_INFINITY);
    cands.sort_by(|a, b| b.total_cmp(a));
    let mut curve: Vec<(f64, f64)> = cands
        .iter()
        .map(|&t| {
            let far = (i.len() - i.partition_point(|&v| v < t)) as f64 / i.len() as f64;
            let frr = g.partition_point(|&v| v < t) as f64 / g.len() as f64;
            (far, frr)
        })
        .collect();
    curve.dedup();
    if let Some(p) = curve.iter().find(|p| p.0 == p.1) {
        return p.0;
    }
    let w = curve
        .windows(2)
        .find(|w| w[0].0 < w[0].1 && w[1].0 > w[1].1)
        .expect("curve crosses");
    let (a, b) = (w[0].0 - w[0].1, w[1].0 - w[1].1);
    w[0].0 + a / (a - b) * (w[1].0 - w[0].0)
}

#[test]
fn criterion_3_eer_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst, mut monotone) = (0.0f64, true);
    for k in 0..100 {
        let n = if k == 0 {
            10
        } else if k == 1 {
            10_000
        } else {
            rng.random_range(10..=10_000)
        };
        let ng = rng.random_range(1..n);
        let sep: f64 = rng.random_range(0.0..3.0);
        let ties = k % 4 == 0;
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut draw = |mu: f64| {
            let v = mu + normal.sample(&mut rng);
            if ties {
                (v * 3.0).round() / 3.0
            } else {
                v
            }
        };
        let g: Vec<f64> = (0..ng).map(|_| draw(sep)).collect();
        let i: Vec<f64> = (0..n - ng).map(|_| draw(0.0)).collect();
        let records = g
            .iter()
            .map(|&s| (s, true))
            .chain(i.iter().map(|&s| (s, false)))
            .enumerate()
            .map(|(j, (score, genuine))| ScoreRecord {
                probe_id: format!("p{j}"),
                gallery_id: format!("g{j}"),
                genuine,
                score,
                scorable: true,
            })
            .collect();
        let roc = compute_roc(&ScoreSet {
            channel: ScoreChannel::Ridge,
            records,
        })
        .unwrap();
        monotone &= roc.points.windows(2).all(|w| {
            w[0].threshold > w[1].threshold && w[0].far <= w[1].far && w[0].gar <= w[1].gar
        });
        worst = worst.max((compute_eer(&roc) - brute_force_eer(&g, &i)).abs());
    }
    let ok = line(
        3,
        "EER oracle equivalence",
        worst <= 1e-9 && monotone,
        start.elapsed(),
        Duration::from_secs(30),
        &format!("max |EER - oracle| {worst:e} over 100 sets; ROC monotone: {monotone}"),
    );
    assert!(ok);
}

#[test]
fn criterion_4_inversion_duality() {
    let start = Instant::now();
    let spec = CorpusSpec {
        fingers: 30,
        impressions: 1,
        seed: 4,
        ..Default::default()
    };
    let corpus = generate_corpus(&spec).unwrap();
    let (ep, fp) = (EnhanceParams::default(), FeatureParams::default());
    let counts: Vec<(usize, usize)> = corpus
        .par_iter()
        .map(|s| {
            let ridge = extract_template(&s.image, &ep, &fp, "r").unwrap().template;
            let valley = extract_template(&invert(&s.image), &ep, &fp, "v")
                .unwrap()
                .template;
            assert_eq!(valley.channel, Channel::Valley);
            let dual = valley
                .minutiae
                .iter()
                .filter(|v| {
                    ridge
                        .minutiae
                        .iter()
                        .any(|r| r.kind == v.kind.opposite() && r.distance(v) <= 8.0)
                })
                .count();
            (dual, valley.minutiae.len())
        })
        .collect();
    let dual: usize = counts.iter().map(|c| c.0).sum();
    let total: usize = counts.iter().map(|c| c.1).sum();
    let frac = dual as f64 / total as f64;
    let ok = line(
        4,
        "inversion duality",
        total > 0 && frac >= 0.90,
        start.elapsed(),
        Duration::from_secs(120),
        &format!("{dual}/{total} valley minutiae ({:.1}%) have an opposite-kind ridge counterpart within 8 px", 100.0 * frac),
    );
    assert!(ok);
}

#[test]
fn criterion_5_singularities() {
    let start = Instant::now();
    let bs = 16;
    let mask = BlockMask::full(256, 256, bs);
    let check = |k: f64, cx: f64, cy: f64, want: SingularityKind| {
        let f = OrientationField::from_fn(256, 256, bs, |x, y| k * (y - cy).atan2(x - cx));
        let found = detect_singularities(&f, &mask);
        let ok = found.len() == 1
            && found[0].kind == want
            && (found[0].x - cx).abs() <= bs as f64
            && (found[0].y - cy).abs() <= bs as f64;
        (ok, found.len())
    };
    let (core_ok, nc) = check(0.5, 130.0, 118.0, SingularityKind::Core);
    let (delta_ok, nd) = check(-0.5, 101.0, 143.0, SingularityKind::Delta);
    let uniform = OrientationField::from_fn(256, 256, bs, |_, _| 0.7);
    let nu = detect_singularities(&uniform, &mask).len();
    let ok = line(
        5,
        "singularity detection",
        core_ok && delta_ok && nu == 0,
        start.elapsed(),
        Duration::from_secs(5),
        &format!("core field {nc} detection(s) ok={core_ok}, delta field {nd} ok={delta_ok}, uniform {nu}"),
    );
    assert!(ok);
}

fn random_template(rng: &mut ChaCha8Rng, n: usize, id: &str) -> Template {
    let minutiae = (0..n)
        .map(|_| {
            let kind = if rng.random_bool(0.5) {
                MinutiaKind::Ending
            } else {
                MinutiaKind::Bifurcation
            };
            Minutia::new(
                f64::from(rng.random_range(350..650)),
                f64::from(rng.random_range(350..650)),
                rng.random_range(0.0..TAU),
                kind,
            )
        })
        .collect();
    Template {
        minutiae,
        singularities: vec![],
        width: 1000,
        height: 1000,
        channel: Channel::Ridge,
        source_id: id.to_string(),
    }
}

/// Rigid motion about the minutiae centroid.
fn moved(t: &Template, angle: f64, dx: f64, dy: f64) -> Template {
    let n = t.minutiae.len() as f64;
    let cx = t.minutiae.iter().map(|m| m.x).sum::<f64>() / n;
    let cy = t.minutiae.iter().map(|m| m.y).sum::<f64>() / n;
    let (c, s) = (angle.cos(), angle.sin());
    let mut out = t.clone();
    for m in &mut out.minutiae {
        if angle != 0.0 {
            let (x, y) = (m.x - cx, m.y - cy);
            m.x = cx + c * x - s * y;
            m.y = cy + s * x + c * y;
            m.theta = ridgevalley::features::normalize_angle(m.theta + angle);
        }
        m.x += dx;
        m.y += dy;
    }
    out
}

#[test]
fn criterion_6_matcher_invariances() {
    let start = Instant::now();
    let cfg = MatcherConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);

    let mut self_ok = true;
    for k in 0..10 {
        let n = rng.random_range(20..40);
        let t = random_template(&mut rng, n, &format!("t{k}"));
        self_ok &= match_templates(&t, &t, &cfg).unwrap().score == 1.0;
    }

    let mut symmetric = true;
    for k in 0..200 {
        let (na, nb) = (rng.random_range(4..40), rng.random_range(4..40));
        let a = random_template(&mut rng, na, &format!("a{k}"));
        let b = random_template(&mut rng, nb, &format!("b{k}"));
        symmetric &=
            match_templates(&a, &b, &cfg).unwrap() == match_templates(&b, &a, &cfg).unwrap();
    }

    let mut translation = true;
    for k in 0..10 {
        let a = random_template(&mut rng, 25, &format!("a{k}"));
        let b = random_template(&mut rng, 25, &format!("b{k}"));
        let (dx, dy) = (
            f64::from(rng.random_range(-60..60)),
            f64::from(rng.random_range(-60..60)),
        );
        let m = moved(&a, 0.0, dx, dy);
        translation &= match_templates(&a, &m, &cfg).unwrap().score == 1.0;
        translation &= match_templates(&m, &b, &cfg).unwrap()
            == match_templates(&moved(&a, 0.0, 0.0, 0.0), &b, &cfg).unwrap();
        let (da, dm) = (
            build_cylinders(&a, &cfg).unwrap(),
            build_cylinders(&m, &cfg).unwrap(),
        );
        translation &= da
            .iter()
            .zip(&dm)
            .all(|(x, y)| x.cells == y.cells && x.validity == y.validity);
    }

    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let a = random_template(&mut rng, 25, &format!("a{k}"));
        let b = random_template(&mut rng, 25, &format!("b{k}"));
        let base = match_templates(&a, &b, &cfg).unwrap().score;
        for deg in [5.0, 15.0, 30.0, 45.0] {
            let r = moved(&a, f64::to_radians(deg), 0.0, 0.0);
            worst = worst
                .max(1.0 - match_templates(&a, &r, &cfg).unwrap().score)
                .max((match_templates(&r, &b, &cfg).unwrap().score - base).abs());
        }
    }

    let ok = line(
        6,
        "matcher invariances",
        self_ok && symmetric && translation && worst <= 0.02,
        start.elapsed(),
        Duration::from_secs(60),
        &format!(
            "self-match 1.0: {self_ok}; symmetric on 200 pairs: {symmetric}; translation exact: {translation}; max rotation change {worst:.2e}"
        ),
    );
    assert!(ok);
}

fn fusion_corpus(dir: &Path) {
    let spec = CorpusSpec {
        fingers: 20,
        impressions: 3,
        render: RenderMode::Contactless(IlluminationParams {
            azimuth: 0.7,
            elevation: FRAC_PI_4,
            ..Default::default()
        }),
        color: true,
        seed: 7,
        ..Default::default()
    };
    write_corpus(&generate_corpus(&spec).unwrap(), dir).unwrap();
}

fn fusion_config(out: &Path, workers: usize) -> ExperimentConfig {
    ExperimentConfig {
        grayscale: Grayscale::Luma,
        channels: ScoreChannel::ALL.to_vec(),
        workers,
        output_dir: out.to_path_buf(),
        ..Default::default()
    }
}

#[test]
fn criteria_7_and_9_fusion_trend_and_determinism() {
    let data = tempfile::tempdir().unwrap();
    let start = Instant::now();
    fusion_corpus(data.path());
    let manifest = ingest(data.path(), &FilenamePattern::default()).unwrap();
    let one = tempfile::tempdir().unwrap();
    let outcome = run_experiment(&manifest, &fusion_config(one.path(), 1)).unwrap();
    let elapsed7 = start.elapsed();
    let eer = |c: ScoreChannel| outcome.reports.iter().find(|r| r.channel == c).unwrap().eer;
    let (r, v, f) = (
        eer(ScoreChannel::Ridge),
        eer(ScoreChannel::Valley),
        eer(ScoreChannel::Fused),
    );
    let ok7 = line(
        7,
        "end-to-end fusion trend",
        f <= r && f <= v + 0.01 && r <= 0.05 && v <= 0.05,
        elapsed7,
        Duration::from_secs(600),
        &format!(
            "EER ridge {r:.4}, valley {v:.4}, fused {f:.4} on {} images ({} genuine, {} imposter)",
            manifest.entries.len(),
            outcome.reports[0].counts.genuine,
            outcome.reports[0].counts.imposter
        ),
    );

    let start = Instant::now();
    let eight = tempfile::tempdir().unwrap();
    run_experiment(&manifest, &fusion_config(eight.path(), 8)).unwrap();
    let mut files = Vec::new();
    for c in ScoreChannel::ALL {
        files.push(format!("scores_{c}.csv"));
        files.push(format!("report_{c}.json"));
        files.push(format!("roc_{c}.csv"));
    }
    files.push("summary.csv".into());
    let differing: Vec<&String> = files
        .iter()
        .filter(|f| {
            std::fs::read(one.path().join(f)).ok() != std::fs::read(eight.path().join(f)).ok()
        })
        .collect();
    let ok9 = line(
        9,
        "determinism across worker counts",
        differing.is_empty(),
        start.elapsed(),
        Duration::from_secs(600),
        &format!(
            "{} artifacts compared between 1 and 8 workers, differing: {differing:?}",
            files.len()
        ),
    );
    assert!(ok7 && ok9);
}

#[test]
fn criterion_8_luma_contrast() {
    let start = Instant::now();
    // Ten contact-style and ten shaded renders, all tinted dark.
    let mut renders = Vec::new();
    for render in [
        RenderMode::Contact,
        RenderMode::Contactless(IlluminationParams {
            azimuth: 2.0,
            ..Default::default()
        }),
    ] {
        let spec = CorpusSpec {
            fingers: 10,
            impressions: 1,
            width: 160,
            height: 160,
            minutiae: 8,
            render,
            color: true,
            seed: 8,
            ..Default::default()
        };
        renders.extend(
            generate_corpus(&spec)
                .unwrap()
                .into_iter()
                .map(|s| s.color.unwrap()),
        );
    }
    let rms = |g: &GrayImage| g.variance().sqrt() / 255.0;
    let dark = renders.iter().all(|c| {
        [c.red(), c.green(), c.blue()]
            .iter()
            .all(|p| p.iter().all(|&v| v < 128.0))
    });
    let ratios: Vec<f64> = renders
        .iter()
        .map(|c| {
            rms(&to_gray_luma(c, GammaParams::new(1.0 / 2.2).unwrap())) / rms(&to_gray_ordinary(c))
        })
        .collect();
    let wins = ratios.iter().filter(|&&r| r > 1.0).count();
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let ok = line(
        8,
        "Luma contrast",
        dark && wins == renders.len(),
        start.elapsed(),
        Duration::from_secs(10),
        &format!(
            "Luma RMS contrast higher on {wins}/{} dark renders, smallest ratio {min_ratio:.3}",
            renders.len()
        ),
    );
    assert!(ok);
}
