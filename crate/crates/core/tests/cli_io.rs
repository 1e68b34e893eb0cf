//! The `trace` binary: run directories, manifests, certificates and sweeps.

use std::fs;
use std::path::Path;
use std::process::Command;

use trace_core::cli::{RunManifest, MANIFEST_FILE, SWEEP_FILE, TRACE_FILE};
use trace_core::io::{read_image, TRACE_CSV_HEADER};

const SMALL: [&str; 10] = ["--T", "3", "--K", "4", "--depth", "2", "--width", "4", "--skip", "2"];

fn trace(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_trace")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn run_small(out: &Path, extra: &[&str]) -> (i32, String, String) {
    let out = out.to_str().unwrap();
    let mut args = vec!["run", "--task", "inpaint50", "--input", "synthetic:16", "--out", out];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    trace(&args)
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn run_writes_complete_directory() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, stderr) = run_small(dir.path(), &[]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("psnr="));
    for f in [MANIFEST_FILE, TRACE_FILE, "recon.pgm", "recon.f32", "y.f32", "states/x_003.f32", "states/x_000.f32"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let text = fs::read_to_string(dir.path().join(TRACE_FILE)).unwrap();
    assert!(text.starts_with(&format!("{TRACE_CSV_HEADER}\n")));
    assert!(!text.contains('\r'));
    let rows = csv_rows(&dir.path().join(TRACE_FILE));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["2", "1", "0"]);
    for r in &rows {
        assert_eq!(r.len(), 7);
        for v in &r[1..] {
            assert!(v.parse::<f64>().unwrap().is_finite(), "{v}");
            assert!(v.contains('e'), "{v}");
        }
    }
    let manifest = RunManifest::load(dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.config.steps, 3);
    assert_eq!(manifest.config.beta_hi, 5e-3);
    assert_eq!(manifest.config.eta, 1.0);

    for (i, r) in rows.iter().enumerate() {
        let t = 2 - i;
        let newer = read_image(dir.path().join(format!("states/x_{:03}.f32", t + 1))).unwrap();
        let older = read_image(dir.path().join(format!("states/x_{t:03}.f32"))).unwrap();
        let delta: f64 = r[1].parse().unwrap();
        assert!((older.distance(&newer).unwrap() - delta).abs() < 1e-6);
    }
    let recon = read_image(dir.path().join("recon.f32")).unwrap();
    assert_eq!(recon, read_image(dir.path().join("states/x_000.f32")).unwrap());
}

#[test]
fn manifest_rerun_is_bitwise_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run_small(a.path(), &["--seed", "4"]).0, 0);
    let manifest = a.path().join(MANIFEST_FILE);
    let (code, _, err) = trace(&["run", "--manifest", manifest.to_str().unwrap(), "--out", b.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    for f in ["recon.pgm", "recon.f32", TRACE_FILE] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn ablation_and_ground_truth_flags() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_small(dir.path(), &["--no-coupling", "--no-ground-truth"]).0, 0);
    let rows = csv_rows(&dir.path().join(TRACE_FILE));
    for r in &rows {
        assert_eq!(r[4].parse::<f64>().unwrap(), 0.0);
        assert_eq!(r[2].parse::<f64>().unwrap(), 0.0);
        assert_eq!((r[5].as_str(), r[6].as_str()), ("nan", "nan"));
    }
    let manifest = RunManifest::load(dir.path().join(MANIFEST_FILE)).unwrap();
    assert!(manifest.config.ablation.disable_coupling && !manifest.ground_truth);
}

#[test]
fn rgb_and_ct_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rgb");
    let mut args = vec!["run", "--task", "sr2", "--input", "synthetic-rgb:16", "--out", out.to_str().unwrap()];
    args.extend_from_slice(&SMALL);
    assert_eq!(trace(&args).0, 0);
    assert!(out.join("recon.ppm").exists());
    assert_eq!(read_image(out.join("recon.ppm")).unwrap().shape(), &[3, 16, 16]);

    let out = dir.path().join("ct");
    let mut args = vec!["run", "--task", "ct_sparse", "--views", "12", "--input", "shepp-logan:16", "--out", out.to_str().unwrap()];
    args.extend_from_slice(&SMALL);
    assert_eq!(trace(&args).0, 0);
    assert_eq!(read_image(out.join("y.f32")).unwrap().shape(), &[1, 12, 23]);

    let pgm = dir.path().join("in.pgm");
    fs::copy(dir.path().join("ct/recon.pgm"), &pgm).unwrap();
    let out = dir.path().join("file");
    let mut args = vec!["run", "--task", "motion", "--input", pgm.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(&SMALL);
    assert_eq!(trace(&args).0, 0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(trace(&["run", "--task", "inpaint50", "--input", "synthetic:16", "--out", out, "--T", "x"]).0, 2);
    assert_eq!(trace(&["run", "--task", "nope", "--input", "synthetic:16", "--out", out]).0, 2);
    assert_eq!(trace(&["explode"]).0, 2);
    assert_eq!(trace(&["--help"]).0, 0);
    let (code, _, err) = trace(&["run", "--task", "inpaint50", "--input", "/nonexistent.pgm", "--out", out]);
    assert_eq!(code, 1, "{err}");
    let (code, _, err) = run_small(dir.path(), &["--lr", "1e38"]);
    assert_eq!(code, 1);
    assert!(err.contains("step"), "{err}");
    // 20 pixels are not divisible by the 2^depth stride of the network
    let (code, _, _) = trace(&["run", "--task", "inpaint50", "--input", "synthetic:20", "--out", out, "--T", "1", "--K", "1"]);
    assert_eq!(code, 1);
}

#[test]
fn verify_theorems_command() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("certs.csv");
    let (code, _, err) = trace(&["verify", "theorems", "--n", "16", "--trials", "10", "--seed", "0", "--csv", csv.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("instance,bound,lhs,rhs,pass\n"));
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true")));
    let (code, stdout, _) = trace(&["verify", "theorems", "--trials", "1"]);
    assert_eq!(code, 0);
    assert!(stdout.lines().count() > 10);
    let (code, _, err) = trace(&["verify", "theorems", "--trials", "1", "--force-fail"]);
    assert_eq!(code, 1);
    assert!(err.contains("certificate failed"), "{err}");
}

#[test]
fn sweep_command() {
    let (code, stdout, _) = trace(&[
        "sweep", "--task", "inpaint50", "--input", "synthetic:16", "--out", "unused", "--budget", "6000", "--t-list",
        "10,20,30,40,50,60", "--dry-run",
    ]);
    assert_eq!(code, 0);
    let pairs: Vec<(usize, usize)> = stdout
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(pairs, vec![(10, 600), (20, 300), (30, 200), (40, 150), (50, 120), (60, 100)]);
    let (code, _, _) = trace(&["sweep", "--task", "inpaint50", "--input", "synthetic:16", "--out", "unused", "--budget", "100", "--t-list", "7", "--dry-run"]);
    assert_eq!(code, 2);

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["sweep", "--task", "inpaint50", "--input", "synthetic:16", "--out", out, "--betas", "5e-3:5e-4,0:0"];
    args.extend_from_slice(&SMALL);
    let (code, _, err) = trace(&args);
    assert_eq!(code, 0, "{err}");
    let rows = csv_rows(&dir.path().join(SWEEP_FILE));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][0], "no_coupling");
    let uncoupled = csv_rows(&dir.path().join("no_coupling").join(TRACE_FILE));
    assert!(uncoupled.iter().all(|r| r[4].parse::<f64>().unwrap() == 0.0));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["sweep", "--task", "inpaint50", "--input", "synthetic:16", "--out", out, "--budget", "8", "--t-list", "2,4"];
    args.extend_from_slice(&SMALL[4..]);
    assert_eq!(trace(&args).0, 0);
    let rows = csv_rows(&dir.path().join(SWEEP_FILE));
    assert_eq!(rows.iter().map(|r| (r[1].as_str(), r[2].as_str())).collect::<Vec<_>>(), [("2", "4"), ("4", "2")]);
}
