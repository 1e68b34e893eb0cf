//! Streams the per-step change of a run as it happens and compares the
//! coupled trajectory with one whose coupling is switched off.
//!
//! `cargo run --release --example trajectory_stability`

use trace_core::engine::{run_trace_observed, Ablation, Problem, StepEvent, TraceConfig};
use trace_core::phantom::synthetic_image;
use trace_core::tasks::{degrade, TaskKind, TaskSpec};

fn main() -> trace_core::Result<()> {
    let truth = synthetic_image(32, 1)?;
    let (y, op) = degrade(&TaskSpec::new(TaskKind::Inpaint70, 0), &truth)?;
    let problem = Problem::new(y, op, truth.shape())?;
    for (label, disable_coupling) in [("coupled", false), ("uncoupled", true)] {
        let config = TraceConfig {
            steps: 12,
            inner_steps: 30,
            ablation: Ablation {
                disable_coupling,
                ..Ablation::default()
            },
            ..TraceConfig::default()
        };
        let mut deltas = Vec::new();
        let record = run_trace_observed(&config, &problem, Some(&truth), &mut |event| {
            if let StepEvent::Step { transition, .. } = event {
                deltas.push(format!("{:.3}", transition.delta));
            }
        })?;
        println!("{label:<9} delta by step: {}", deltas.join(" "));
        println!(
            "{label:<9} mean delta {:.4}, final psnr {:.2} dB",
            record.mean_delta(),
            record.final_psnr().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
