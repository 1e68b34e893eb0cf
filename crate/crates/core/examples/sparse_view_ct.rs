//! Reconstructs a Shepp-Logan phantom from a sparse set of parallel-beam
//! projections and compares against the normalized back-projection.
//!
//! `cargo run --release --example sparse_view_ct`

use trace_core::engine::{run_trace, Problem, TraceConfig};
use trace_core::metrics::psnr;
use trace_core::phantom::shepp_logan;
use trace_core::tasks::{degrade, normalize_unit, TaskKind, TaskSpec};

fn main() -> trace_core::Result<()> {
    let truth = shepp_logan(32)?;
    let task = TaskSpec::new(TaskKind::CtSparse, 0).with_views(20);
    let (sino, op) = degrade(&task, &truth)?;
    let backprojection = normalize_unit(&op.adjoint(&sino)?);
    println!("sinogram {:?}, {} views", sino.shape(), task.angles().len());
    println!("normalized back-projection psnr {:.2} dB", psnr(&backprojection, &truth)?);

    let problem = Problem::new(sino, op, truth.shape())?;
    let config = TraceConfig {
        steps: 8,
        inner_steps: 60,
        ..TraceConfig::default()
    };
    let record = run_trace(&config, &problem, Some(&truth))?;
    println!("trajectory x_T psnr {:.2} dB", record.initial_psnr.unwrap_or(f64::NAN));
    println!("trajectory x_0 psnr {:.2} dB", record.final_psnr().unwrap_or(f64::NAN));
    Ok(())
}
