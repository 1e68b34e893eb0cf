//! Drives a run from a manifest the same way the `trace run` command does
//! and lists the files it leaves behind.
//!
//! `cargo run --release --example manifest_run`

use trace_core::cli::{execute, RunManifest};
use trace_core::engine::TraceConfig;
use trace_core::tasks::{TaskKind, TaskSpec};

fn main() -> trace_core::Result<()> {
    let out = std::env::temp_dir().join("trace_manifest_run");
    let manifest = RunManifest::new(
        TaskSpec::new(TaskKind::Sr4, 0),
        "synthetic:32",
        &out,
        TraceConfig {
            steps: 4,
            inner_steps: 25,
            snapshot_every: 2,
            ..TraceConfig::default()
        },
    );
    println!("{}", manifest.to_json()?);
    let record = execute(&manifest)?;
    println!("final psnr {:.2} dB after {} optimizer steps", record.final_psnr().unwrap_or(f64::NAN), record.optimizer_steps);
    let mut files: Vec<_> = walk(&out)?;
    files.sort();
    for f in files {
        println!("{}", f.strip_prefix(&out).unwrap_or(&f).display());
    }
    Ok(())
}

fn walk(dir: &std::path::Path) -> std::io::Result<Vec<std::path::PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            files.extend(walk(&path)?);
        } else {
            files.push(path);
        }
    }
    Ok(files)
}
