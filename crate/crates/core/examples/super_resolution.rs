//! Recovers a colour image from its 2x decimation.
//!
//! `cargo run --release --example super_resolution`

use trace_core::engine::{run_trace, Problem, TraceConfig};
use trace_core::metrics::psnr;
use trace_core::network::ArchConfig;
use trace_core::phantom::synthetic_image;
use trace_core::tasks::{degrade, TaskKind, TaskSpec};

fn main() -> trace_core::Result<()> {
    let truth = synthetic_image(32, 3)?;
    let (y, op) = degrade(&TaskSpec::new(TaskKind::Sr2, 0), &truth)?;
    let upsampled = op.adjoint(&y)?.map(|v| (4.0 * v).clamp(0.0, 1.0));
    let problem = Problem::new(y, op, truth.shape())?;
    let config = TraceConfig {
        steps: 10,
        inner_steps: 40,
        arch: ArchConfig {
            channels: 3,
            ..ArchConfig::default()
        },
        ..TraceConfig::default()
    };
    let record = run_trace(&config, &problem, Some(&truth))?;
    println!("measurements {:?} -> image {:?}", problem.y.shape(), truth.shape());
    println!("scaled adjoint psnr {:.2} dB", psnr(&upsampled, &truth)?);
    println!("x_T psnr            {:.2} dB", record.initial_psnr.unwrap_or(f64::NAN));
    println!("x_0 psnr            {:.2} dB", record.final_psnr().unwrap_or(f64::NAN));
    Ok(())
}
