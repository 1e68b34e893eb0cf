//! Runs the full method next to each single-component ablation on the same
//! instance and seed.
//!
//! `cargo run --release --example ablations`

use trace_core::engine::{run_trace, Ablation, Problem, TraceConfig};
use trace_core::phantom::synthetic_image;
use trace_core::tasks::{degrade, TaskKind, TaskSpec};

fn main() -> trace_core::Result<()> {
    let truth = synthetic_image(32, 1)?;
    let (y, op) = degrade(&TaskSpec::new(TaskKind::Inpaint50, 0), &truth)?;
    let problem = Problem::new(y, op, truth.shape())?;
    let variants = [
        ("full", Ablation::default()),
        ("no coupling", Ablation { disable_coupling: true, ..Ablation::default() }),
        ("no perturbation", Ablation { disable_perturbation: true, ..Ablation::default() }),
        ("no inheritance", Ablation { disable_inheritance: true, ..Ablation::default() }),
    ];
    println!("{:<16} {:>8} {:>7} {:>10}", "variant", "psnr", "ssim", "mean delta");
    for (label, ablation) in variants {
        let config = TraceConfig {
            steps: 10,
            inner_steps: 30,
            ablation,
            ..TraceConfig::default()
        };
        let record = run_trace(&config, &problem, Some(&truth))?;
        println!(
            "{label:<16} {:>8.2} {:>7.3} {:>10.4}",
            record.final_psnr().unwrap_or(f64::NAN),
            record.final_ssim().unwrap_or(f64::NAN),
            record.mean_delta()
        );
    }
    Ok(())
}
