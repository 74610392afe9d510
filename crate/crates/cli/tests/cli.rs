use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ridgevalley"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, fingers: &str) {
    ok(&[
        "synth",
        "-o",
        p(dir),
        "--fingers",
        fingers,
        "--impressions",
        "2",
        "--width",
        "192",
        "--height",
        "192",
        "--minutiae",
        "12",
        "--color",
    ]);
}

#[test]
fn image_to_score_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "1");
    assert!(data.join("s001_1_2.json").exists());
    let img = data.join("s001_1_1.png");

    let gray = tmp.path().join("gray.pgm");
    ok(&[
        "convert",
        p(&img),
        "-o",
        p(&gray),
        "--grayscale",
        "ordinary",
        "--invert",
    ]);
    assert!(gray.exists());

    let tpl = tmp.path().join("a.rvt");
    let debug = tmp.path().join("debug");
    ok(&[
        "extract",
        p(&img),
        "-o",
        p(&tpl),
        "--channel",
        "valley",
        "--debug-dir",
        p(&debug),
    ]);
    let text = std::fs::read_to_string(&tpl).unwrap();
    assert!(text.starts_with("RVT1\n192 192 valley\n"));
    for f in [
        "orientation.csv",
        "binary.png",
        "skeleton.png",
        "overlay.png",
    ] {
        assert!(debug.join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(debug.join("orientation.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "block_x,block_y,angle_rad,coherence"
    );

    let score: f64 = ok(&["match", p(&tpl), p(&tpl)]).trim().parse().unwrap();
    assert_eq!(score, 1.0);
}

#[test]
fn run_then_report_from_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "2");
    let cfg = tmp.path().join("experiment.toml");
    std::fs::write(
        &cfg,
        "grayscale = \"ordinary\"\nfar_targets = [0.5]\noutput_dir = \"out\"\n",
    )
    .unwrap();
    let stdout = ok(&[
        "run",
        "--data",
        p(&data),
        "--config",
        p(&cfg),
        "--workers",
        "2",
    ]);
    assert!(stdout.contains("fused: EER"));
    let out = tmp.path().join("out");
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);

    let again = tmp.path().join("again");
    let ridge = format!("ridge={}", p(&out.join("scores_ridge.csv")));
    let valley = format!("valley={}", p(&out.join("scores_valley.csv")));
    ok(&[
        "report",
        "--scores",
        &ridge,
        "--scores",
        &valley,
        "--fuse",
        "--far",
        "0.5",
        "-o",
        p(&again),
    ]);
    for f in [
        "report_ridge.json",
        "report_valley.json",
        "report_fused.json",
        "roc_fused.csv",
        "summary.csv",
    ] {
        assert_eq!(
            std::fs::read(out.join(f)).unwrap(),
            std::fs::read(again.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
    assert_eq!(bin(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        bin(&["report", "--scores", "nonsense", "-o", "x"])
            .status
            .code(),
        Some(1)
    );
    let missing = tmp.path().join("missing.png");
    assert_eq!(
        bin(&["extract", p(&missing), "-o", "x.rvt"]).status.code(),
        Some(2)
    );
    let bad = tmp.path().join("bad.rvt");
    std::fs::write(&bad, "RVT1\n10 10 ridge\nseven\n").unwrap();
    let out = bin(&["match", p(&bad), p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}
