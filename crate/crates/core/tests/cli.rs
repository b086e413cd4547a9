//! End-to-end runs through the configuration and artifact layer, and the
//! command-line binary.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::Path;
use std::process::Command;

use phc_design::cli::{run, sha256_hex, RunManifest, MANIFEST};
use phc_design::config::parse_config;

fn run_text(text: &str, out: &Path) -> RunManifest {
    let mut c = parse_config(text).unwrap();
    c.output = out.to_path_buf();
    run(&c).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn assert_inventory(dir: &Path, m: &RunManifest) {
    for f in &m.files {
        let bytes = fs::read(dir.join(&f.path)).unwrap();
        assert_eq!(bytes.len() as u64, f.bytes, "{}", f.path);
        assert_eq!(sha256_hex(&bytes), f.sha256, "{}", f.path);
    }
    let on_disk: serde_json::Value = serde_json::from_slice(&fs::read(dir.join(MANIFEST)).unwrap()).unwrap();
    assert_eq!(on_disk["files"].as_array().unwrap().len(), m.files.len());
}

#[test]
fn empty_lattice_bands_follow_folded_light_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "[run]\ncommand = \"bands\"\n[lattice]\nbulk_index = 1.0\nhole_index = 1.0\n[solver]\nn_g = 61\nbands = 6\npoints_per_segment = 5\n";
    let m = run_text(text, tmp.path());
    assert_inventory(tmp.path(), &m);
    let (header, rows) = read_csv(&tmp.path().join("bands.csv"));
    assert_eq!(header.len(), 4 + 6);
    let b1 = (TAU, -TAU / 3f64.sqrt());
    let b2 = (0.0, 2.0 * TAU / 3f64.sqrt());
    for row in &rows {
        let (qx, qy) = (row[2], row[3]);
        let mut free: Vec<f64> = (-5..=5)
            .flat_map(|i| (-5..=5).map(move |j| (i as f64, j as f64)))
            .map(|(i, j)| (qx + i * b1.0 + j * b2.0).hypot(qy + i * b1.1 + j * b2.1) / (2.0 * PI))
            .collect();
        free.sort_by(f64::total_cmp);
        for b in 0..6 {
            assert!((row[4 + b] - free[b]).abs() < 1e-9 * free[b].max(1.0), "q ({qx}, {qy}) band {b}");
        }
    }
    assert!(m.results["gaps"].as_array().unwrap().is_empty());
}

#[test]
fn same_config_and_seed_give_identical_csv() {
    let text = "[run]\ncommand = \"ga-opt\"\nseed = 11\n[ga]\nfitness = \"surrogate\"\npopulation = 6\ngenerations = 4\n";
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = run_text(text, a.path());
    let mb = run_text(text, b.path());
    let csv = |d: &Path| fs::read(d.join("ga_log.csv")).unwrap();
    assert_eq!(csv(a.path()), csv(b.path()));
    // the checkpoint also stores wall-clock times; every other file must match
    let hashes = |m: &RunManifest| {
        m.files.iter().filter(|f| f.path != "ga.ckpt").map(|f| (f.path.clone(), f.sha256.clone())).collect::<Vec<_>>()
    };
    assert_eq!(hashes(&ma), hashes(&mb));
    assert_inventory(a.path(), &ma);
}

#[test]
fn one_generation_surrogate_run_writes_a_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "[run]\ncommand = \"ga-opt\"\n[ga]\nfitness = \"surrogate\"\npopulation = 4\ngenerations = 1\n";
    let m = run_text(text, tmp.path());
    assert!(tmp.path().join("ga.ckpt").exists());
    assert!(m.files.iter().any(|f| f.path == "ga.ckpt"));
    let (_, rows) = read_csv(&tmp.path().join("ga_log.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows[1][2] >= rows[0][2]);
    assert_eq!(m.results["generations"], 1);
}

#[test]
fn resumed_run_matches_an_uninterrupted_one() {
    let straight = tempfile::tempdir().unwrap();
    let resumed = tempfile::tempdir().unwrap();
    let text = |g: usize| {
        format!("[run]\ncommand = \"ga-opt\"\nseed = 5\n[ga]\nfitness = \"surrogate\"\npopulation = 5\ngenerations = {g}\nresume = true\n")
    };
    run_text(&text(6), straight.path());
    run_text(&text(2), resumed.path());
    run_text(&text(6), resumed.path());
    let csv = |d: &Path| fs::read(d.join("ga_log.csv")).unwrap();
    assert_eq!(csv(straight.path()), csv(resumed.path()));
}

#[test]
fn invert2d_manifest_reports_the_design() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "[run]\ncommand = \"invert2d\"\n[lattice]\n[solver]\nn_g = 19\nn_q = 19\n[objective]\nbudget = 3\ncontour_resolution = 16.0\n";
    let m = run_text(text, tmp.path());
    assert_inventory(tmp.path(), &m);
    let r = &m.results;
    let gap = r["gap"].as_array().unwrap();
    let (lo, hi) = (gap[0].as_f64().unwrap(), gap[1].as_f64().unwrap());
    let w = r["omega_m"].as_f64().unwrap();
    assert!(lo < w && w < hi);
    for k in ["J", "V_lambda2", "beta_I", "beta_V", "Lambda"] {
        assert!(r[k].as_f64().unwrap().is_finite(), "{k}");
    }
    let contours = r["contours"].as_array().unwrap();
    assert!(!contours.is_empty());
    for k in ["site", "center_x", "center_y", "major", "minor", "angle"] {
        assert!(contours[0].get(k).is_some(), "{k}");
    }
    let eta = fs::read_to_string(tmp.path().join("eta.txt")).unwrap();
    assert!(eta.starts_with("# eta"));
    assert_eq!(eta.lines().count(), 1 + 6 * 16);
}

fn binary(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_phc-design")).args(args).output().unwrap()
}

#[test]
fn binary_reports_config_errors_with_exit_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[run]\ncommand = \"invert2d\"\n[lattice]\n[objective]\nbetaV = 1.0\nbeta_I = -1\n").unwrap();
    let out = binary(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("did you mean `beta_V`"), "{err}");
    assert!(err.contains("objective.beta_I"), "{err}");
    assert!(err.contains("hint:"), "{err}");
}

#[test]
fn binary_missing_config_is_an_io_error() {
    let out = binary(&["--config", "/nonexistent/phc.toml"]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn binary_runs_with_output_and_seed_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("ga.toml");
    fs::write(&cfg, "[run]\ncommand = \"ga-opt\"\n[ga]\nfitness = \"surrogate\"\npopulation = 4\ngenerations = 2\n").unwrap();
    let out_dir = tmp.path().join("out");
    let out = binary(&["--config", cfg.to_str().unwrap(), "--output", out_dir.to_str().unwrap(), "--seed", "9", "-v"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("generation")).count(), 3);
    let m: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join(MANIFEST)).unwrap()).unwrap();
    assert_eq!(m["seed"], 9);
}
