use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lrsurf::io::{read_lrsurf, write_lrsurf, write_xyz};
use lrsurf::{GlobalKnotVector, LRSurface, PointCloud, TPSurface};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lrsurf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrsurf"))
        .args(args)
        .env("LRSURF_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn terrain(x: f64, y: f64) -> f64 {
    -10.0 + 2.0 * (-((x - 12.0).powi(2) + (y - 8.0).powi(2)) / 20.0).exp() + 0.05 * x
}

fn write_cloud(dir: &Path, n: usize) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cloud = PointCloud::from_xyz((0..n).map(|_| {
        let x = rng.gen_range(0.0..24.0);
        let y = rng.gen_range(0.0..16.0);
        (x, y, terrain(x, y))
    }));
    let path = dir.join("cloud.xyz");
    write_xyz(&cloud, &path).unwrap();
    path
}

fn write_tp_surface(dir: &Path) -> PathBuf {
    let ku = GlobalKnotVector::uniform(0.0, 24.0, 2, 6).unwrap();
    let kv = GlobalKnotVector::uniform(0.0, 16.0, 2, 4).unwrap();
    let tp = TPSurface::from_greville_fn(ku, kv, terrain);
    let path = dir.join("tp.lrsurf");
    write_lrsurf(&LRSurface::from_tensor_product(&tp), &path).unwrap();
    path
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn fit_writes_outputs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_cloud(dir.path(), 3000);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_ok(&lrsurf(&["fit", "--input", s(&input), "--preset", "F7", "--out", s(out)]));
    }
    for name in ["surface.lrsurf", "history.csv", "report.txt"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let manifest = fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert!(manifest.contains("preset = F7"));
    for line in manifest.lines().filter_map(|l| l.strip_prefix("output = ")) {
        assert!(Path::new(line).exists(), "{line}");
    }
    read_lrsurf(&a.join("surface.lrsurf")).unwrap();
    let history = fs::read_to_string(a.join("history.csv")).unwrap();
    assert!(history.starts_with("iteration,method,"));
    assert!(history.lines().count() >= 2);
    let report = fs::read_to_string(a.join("report.txt")).unwrap();
    assert!(report.starts_with("coefs\tmax\tavg"));
}

#[test]
fn fit_with_significant_points_and_weighted_mid() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_cloud(dir.path(), 1500);
    let sig = dir.path().join("sig.xyz");
    fs::write(&sig, "12 8 -8.0\n").unwrap();
    let out = dir.path().join("o");
    assert_ok(&lrsurf(&[
        "fit", "--input", s(&input), "--preset", "WM7", "--significant", s(&sig), "--tol-sig", "0.2",
        "--out", s(&out),
    ]));
    for name in ["lower.lrsurf", "upper.lrsurf", "mid.lrsurf"] {
        read_lrsurf(&out.join(name)).unwrap();
    }
}

#[test]
fn fit_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_cloud(dir.path(), 800);
    let cfg = dir.path().join("fit.cfg");
    fs::write(&cfg, "max_iterations = 2\nthreshold = 0.3\n").unwrap();
    let out = dir.path().join("o");
    assert_ok(&lrsurf(&["fit", "--input", s(&input), "--config", s(&cfg), "--out", s(&out)]));
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert!(history.lines().count() <= 4);
}

#[test]
fn missing_input_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.xyz");
    let out = lrsurf(&["fit", "--input", s(&missing), "--preset", "F7", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.xyz"));
}

#[test]
fn unknown_preset_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_cloud(dir.path(), 10);
    let out = lrsurf(&["fit", "--input", s(&input), "--preset", "X1", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn raster_export_at_two_resolutions() {
    let dir = tempfile::tempdir().unwrap();
    let surf = write_tp_surface(dir.path());
    let mut sizes = Vec::new();
    for cell in ["1", "5"] {
        let out = dir.path().join(format!("r{cell}.asc"));
        assert_ok(&lrsurf(&["export", "raster", "--surface", s(&surf), "--cellsize", cell, "--out", s(&out)]));
        let r = lrsurf::io::read_asc(&out).unwrap();
        sizes.push((r.ncols, r.nrows));
    }
    assert_eq!(sizes, vec![(24, 16), (5, 4)]);

    let bad = lrsurf(&["export", "raster", "--surface", s(&surf), "--cellsize", "0", "--out", "x.asc"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn raster_export_with_mask() {
    let dir = tempfile::tempdir().unwrap();
    let surf = write_tp_surface(dir.path());
    let pts = dir.path().join("pts.xyz");
    fs::write(&pts, "1 1 0\n").unwrap();
    let out = dir.path().join("m.asc");
    assert_ok(&lrsurf(&[
        "export", "raster", "--surface", s(&surf), "--cellsize", "1", "--mask", s(&pts), "--out", s(&out),
    ]));
    let r = lrsurf::io::read_asc(&out).unwrap();
    assert!(r.data_count() > 0 && r.data_count() < r.ncols * r.nrows);
}

#[test]
fn split_tp_of_tensor_product_is_one_patch() {
    let dir = tempfile::tempdir().unwrap();
    let surf = write_tp_surface(dir.path());
    let out = dir.path().join("patches");
    assert_ok(&lrsurf(&["export", "split-tp", "--surface", s(&surf), "--max-segmented", "4", "--out", s(&out)]));
    let patches: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "lrsurf"))
        .collect();
    assert_eq!(patches.len(), 1);
    let p = read_lrsurf(&patches[0].path()).unwrap();
    let orig = read_lrsurf(&surf).unwrap();
    assert!((p.value(7.3, 2.1) - orig.value(7.3, 2.1)).abs() < 1e-12);
    assert!(out.join("adjacency.txt").exists());
}

#[test]
fn contour_and_extrema() {
    let dir = tempfile::tempdir().unwrap();
    let surf = write_tp_surface(dir.path());
    let csv = dir.path().join("c.csv");
    assert_ok(&lrsurf(&["analyze", "contour", "--surface", s(&surf), "--levels", "-9.5:-8:1", "--out", s(&csv)]));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("level,curve_id,closed,seq,x,y"));
    assert!(text.lines().count() > 10);

    let csv = dir.path().join("e.csv");
    assert_ok(&lrsurf(&[
        "analyze", "extrema", "--surface", s(&surf), "--levels", "-9,-8.5", "--prominence", "0.01", "--out", s(&csv),
    ]));
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("kind,x,y,z,trigger_level"));
    assert!(text.lines().any(|l| l.starts_with("max,")), "{text}");
}

#[test]
fn empty_level_list_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let surf = write_tp_surface(dir.path());
    for levels in ["", ",", "3:1:1"] {
        let out = lrsurf(&["analyze", "contour", "--surface", s(&surf), "--levels", levels, "--out", "c.csv"]);
        assert_eq!(out.status.code(), Some(2), "{levels:?}");
    }
}

#[test]
fn slope_limits_and_mid() {
    let dir = tempfile::tempdir().unwrap();
    let surf = write_tp_surface(dir.path());
    let input = write_cloud(dir.path(), 500);
    let slope = dir.path().join("slope.asc");
    assert_ok(&lrsurf(&["analyze", "slope", "--surface", s(&surf), "--cellsize", "2", "--out", s(&slope)]));
    assert!(lrsurf::io::read_asc(&slope).unwrap().values.iter().all(|v| (0.0..90.0).contains(v)));

    let lim = dir.path().join("lim");
    assert_ok(&lrsurf(&["analyze", "limits", "--surface", s(&surf), "--input", s(&input), "--out", s(&lim)]));
    let lower = read_lrsurf(&lim.join("lower.lrsurf")).unwrap();
    let upper = read_lrsurf(&lim.join("upper.lrsurf")).unwrap();
    assert!(lower.value(5.0, 5.0) <= upper.value(5.0, 5.0));

    let mid = dir.path().join("mid.lrsurf");
    assert_ok(&lrsurf(&["analyze", "mid", "--surface", s(&surf), "--input", s(&input), "--out", s(&mid)]));
    read_lrsurf(&mid).unwrap();
    let bad = lrsurf(&[
        "analyze", "mid", "--surface", s(&surf), "--input", s(&input), "--d1", "0", "--d2", "-20", "--out", s(&mid),
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn accuracy_of_surface_and_raster() {
    let dir = tempfile::tempdir().unwrap();
    let surf_path = write_tp_surface(dir.path());
    let surf = read_lrsurf(&surf_path).unwrap();
    let exact = PointCloud::from_xyz([(3.0, 4.0), (10.5, 7.25), (20.0, 15.0)].map(|(x, y)| (x, y, surf.value(x, y))));
    let exact_path = dir.path().join("exact.xyz");
    write_xyz(&exact, &exact_path).unwrap();
    let out = lrsurf(&["accuracy", "--surface", s(&surf_path), "--input", s(&exact_path)]);
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("max distance:    0.000000"));

    let asc = dir.path().join("r.asc");
    assert_ok(&lrsurf(&["export", "raster", "--surface", s(&surf_path), "--cellsize", "1", "--out", s(&asc)]));
    let far = dir.path().join("far.xyz");
    fs::write(&far, "5 5 -10\n500 500 -10\n").unwrap();
    let out = lrsurf(&["accuracy", "--surface", s(&asc), "--input", s(&far)]);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("points:          1"), "{stdout}");
    assert!(stdout.contains("outside:         1"), "{stdout}");
}
