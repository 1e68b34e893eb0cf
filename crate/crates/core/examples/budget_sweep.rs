//! Splits a fixed optimizer budget between trajectory length and inner
//! steps and writes the comparison as CSV.
//!
//! `cargo run --release --example budget_sweep`

use trace_core::cli::{budget_pairs, sweep_csv, SweepRow};
use trace_core::engine::{run_trace, Problem, TraceConfig};
use trace_core::phantom::synthetic_image;
use trace_core::tasks::{degrade, TaskKind, TaskSpec};

fn main() -> trace_core::Result<()> {
    let truth = synthetic_image(32, 1)?;
    let (y, op) = degrade(&TaskSpec::new(TaskKind::Inpaint50, 0), &truth)?;
    let problem = Problem::new(y, op, truth.shape())?;
    let mut rows = Vec::new();
    for (steps, inner_steps) in budget_pairs(480, &[4, 8, 16])? {
        let config = TraceConfig {
            steps,
            inner_steps,
            ..TraceConfig::default()
        };
        let record = run_trace(&config, &problem, Some(&truth))?;
        rows.push(SweepRow {
            label: format!("T{steps}"),
            steps,
            inner_steps,
            beta_hi: config.beta_hi,
            beta_lo: config.beta_lo,
            final_psnr: record.final_psnr().unwrap_or(f64::NAN),
            final_ssim: record.final_ssim().unwrap_or(f64::NAN),
            mean_delta: record.mean_delta(),
        });
    }
    print!("{}", sweep_csv(&rows));
    Ok(())
}
