use std::path::Path;
use std::process::{Command, Output};

use ebsd_cs::maps::{load_labels, load_map, read_metrics_csv};
use ebsd_cs::sampler::SamplingSet;

fn ebsd(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ebsd-cs"))
        .arg("--out-dir")
        .arg(out_dir)
        .args(args)
        .output()
        .expect("spawn ebsd-cs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

const SMALL: [&str; 6] = ["--width", "40", "--height", "32", "--grains", "6"];

#[test]
fn mask_on_default_grid() {
    let dir = tempfile::tempdir().unwrap();
    ok(&ebsd(dir.path(), &["mask", "--ratio", "0.1", "--seed", "3"]));
    let mask = SamplingSet::load(dir.path().join("mask.txt")).unwrap();
    assert_eq!(mask.n_positions(), 65536);
    assert_eq!(mask.len(), 6554);
    assert_eq!(mask.seed(), 3);
}

#[test]
fn missing_input_is_a_runtime_error_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let missing = dir.path().join("absent.pgm");
    for cmd in ["inpaint", "subsample"] {
        let out = ebsd(&out_dir, &[cmd, "--input", missing.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(1));
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert_eq!(stderr.trim_end().lines().count(), 1, "{stderr}");
        assert!(stderr.contains("absent.pgm"));
        assert!(!out_dir.exists());
    }
    let out = ebsd(
        &out_dir,
        &["metrics", "--reference", missing.to_str().unwrap(), "--reconstruction", missing.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(!out_dir.exists());
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ebsd(dir.path(), &["mask", "--ratio"]).status.code(), Some(2));
    assert_eq!(ebsd(dir.path(), &["inpaint"]).status.code(), Some(2));
    assert_eq!(ebsd(dir.path(), &["sweep", "--ratios", "0.5,0.1"]).status.code(), Some(2));
    assert_eq!(ebsd(dir.path(), &["phantom", "--grains", "0"]).status.code(), Some(2));
}

#[test]
fn phantom_outputs() {
    let dir = tempfile::tempdir().unwrap();
    ok(&ebsd(dir.path(), &[&["phantom", "--seed", "5"], &SMALL[..]].concat()));
    let bc = load_map(dir.path().join("band_contrast.pgm")).unwrap();
    let ipf = load_map(dir.path().join("ipf.ppm")).unwrap();
    let (labels, w, h) = load_labels(dir.path().join("labels.pgm")).unwrap();
    assert_eq!((bc.width(), bc.height(), bc.channels()), (40, 32, 1));
    assert_eq!(ipf.channels(), 3);
    assert_eq!((w, h), (40, 32));
    assert!(labels.iter().all(|&l| l < 6));
}

#[test]
fn full_sampling_inpaint_then_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&ebsd(d, &[&["phantom"], &SMALL[..]].concat()));
    let bc = d.join("band_contrast.pgm");
    ok(&ebsd(
        &d.join("rec"),
        &["inpaint", "--input", bc.to_str().unwrap(), "--ratio", "1.0", "--noise-sigma", "0"],
    ));
    let rec = d.join("rec/reconstruction.pgm");
    assert_eq!(std::fs::read(&rec).unwrap(), std::fs::read(&bc).unwrap());
    for name in ["mask.txt", "diagnostics.csv", "dictionary.bin", "dictionary.bin.hdr"] {
        assert!(d.join("rec").join(name).exists(), "{name}");
    }
    let out = ebsd(
        &d.join("m"),
        &["metrics", "--reference", bc.to_str().unwrap(), "--reconstruction", rec.to_str().unwrap(), "--ratio", "1.0"],
    );
    ok(&out);
    let recs = read_metrics_csv(d.join("m/metrics.csv")).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].ssim, 1.0);
    assert_eq!(recs[0].psnr_db, f64::INFINITY);
    assert!(String::from_utf8_lossy(&out.stdout).contains(",1.000000,inf,"));
}

#[test]
fn subsample_and_inpaint_with_mask_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&ebsd(d, &[&["phantom"], &SMALL[..]].concat()));
    let ipf = d.join("ipf.ppm");
    ok(&ebsd(d, &[&["mask", "--ratio", "0.3", "--seed", "2"], &SMALL[..4]].concat()));
    let mask = d.join("mask.txt");
    ok(&ebsd(
        &d.join("s"),
        &["subsample", "--input", ipf.to_str().unwrap(), "--mask", mask.to_str().unwrap()],
    ));
    let sub = load_map(d.join("s/subsampled.ppm")).unwrap();
    let set = SamplingSet::load(&mask).unwrap();
    let on = set.membership();
    assert!((0..sub.n_positions()).filter(|&j| !on[j]).all(|j| sub.pixel(j) == [0.0, 0.0, 0.0]));
    assert!(!d.join("s/mask.txt").exists());

    let args = [
        "inpaint", "--input", ipf.to_str().unwrap(), "--mask", mask.to_str().unwrap(),
        "--k", "8", "--burn-in", "2", "--samples", "2", "--stride", "4", "--seed", "1",
    ];
    ok(&ebsd(&d.join("a"), &args));
    ok(&ebsd(&d.join("b"), &args));
    let a = std::fs::read(d.join("a/reconstruction.ppm")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b/reconstruction.ppm")).unwrap());
    assert_eq!(
        std::fs::read(d.join("a/dictionary.bin")).unwrap(),
        std::fs::read(d.join("b/dictionary.bin")).unwrap()
    );
    let diag = std::fs::read_to_string(d.join("a/diagnostics.csv")).unwrap();
    assert!(diag.starts_with("sweep,rmse_observed,active_atoms,gamma_eps\n"));
    assert_eq!(diag.lines().count(), 1 + 4);
}

#[test]
fn config_file_values_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("cfg.json");
    std::fs::write(&cfg, r#"{"ratio": 0.5, "width": 20, "height": 10, "seed": 8}"#).unwrap();
    ok(&ebsd(&d.join("a"), &["--config", cfg.to_str().unwrap(), "mask"]));
    let a = SamplingSet::load(d.join("a/mask.txt")).unwrap();
    assert_eq!((a.n_positions(), a.len(), a.seed()), (200, 100, 8));
    ok(&ebsd(&d.join("b"), &["--config", cfg.to_str().unwrap(), "mask", "--ratio", "0.25", "--seed", "1"]));
    let b = SamplingSet::load(d.join("b/mask.txt")).unwrap();
    assert_eq!((b.len(), b.seed()), (50, 1));
}

fn strip_wall_time(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(5);
            f.join(",")
        })
        .collect()
}

#[test]
fn small_sweep_is_complete_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = [
        &["sweep"][..],
        &SMALL[..],
        &[
            "--ratios", "0.2,0.5,1.0", "--seeds", "1,2", "--k", "6",
            "--burn-in", "2", "--samples", "2", "--stride", "4",
        ],
    ]
    .concat();
    ok(&ebsd(&d.join("a"), &args));
    ok(&ebsd(&d.join("b"), &args));
    let recs = read_metrics_csv(d.join("a/metrics.csv")).unwrap();
    assert_eq!(recs.len(), 2 * 3 * 2);
    assert!(recs.iter().all(|r| r.estimated_acquisition_s > 0.0));
    for name in ["ssim.svg", "psnr.svg", "report.txt"] {
        assert_eq!(
            std::fs::read(d.join("a").join(name)).unwrap(),
            std::fs::read(d.join("b").join(name)).unwrap(),
            "{name}"
        );
    }
    let csv = |p: &str| std::fs::read_to_string(d.join(p).join("metrics.csv")).unwrap();
    assert_eq!(strip_wall_time(&csv("a")), strip_wall_time(&csv("b")));
    let svg = std::fs::read_to_string(d.join("a/ssim.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    let report = std::fs::read_to_string(d.join("a/report.txt")).unwrap();
    for needle in ["mask family", "patch size", "K ", "k1, k2"] {
        assert!(report.contains(needle), "{needle}");
    }
}
