//! Deconvolves a motion blur and an anisotropic blur followed by a
//! saturating nonlinearity.
//!
//! `cargo run --release --example deblurring`

use trace_core::engine::{run_trace, Problem, TraceConfig};
use trace_core::phantom::synthetic_image;
use trace_core::tasks::{degrade, TaskKind, TaskSpec};

fn main() -> trace_core::Result<()> {
    let truth = synthetic_image(32, 1)?;
    let config = TraceConfig {
        steps: 10,
        inner_steps: 40,
        ..TraceConfig::default()
    };
    for kind in [TaskKind::Motion, TaskKind::Nonlinear] {
        let (y, op) = degrade(&TaskSpec::new(kind, 0), &truth)?;
        let problem = Problem::new(y, op, truth.shape())?;
        let record = run_trace(&config, &problem, Some(&truth))?;
        println!(
            "{:<9} x_T {:.2} dB -> x_0 {:.2} dB, ssim {:.3}",
            kind.as_str(),
            record.initial_psnr.unwrap_or(f64::NAN),
            record.final_psnr().unwrap_or(f64::NAN),
            record.final_ssim().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
