//! Fills in half of the pixels of a synthetic image and prints how the
//! trajectory settles step by step.
//!
//! `cargo run --release --example inpainting`

use trace_core::engine::{run_trace, Problem, TraceConfig};
use trace_core::io::write_pnm;
use trace_core::phantom::synthetic_image;
use trace_core::tasks::{degrade, TaskKind, TaskSpec};

fn main() -> trace_core::Result<()> {
    let truth = synthetic_image(32, 1)?;
    let (y, op) = degrade(&TaskSpec::new(TaskKind::Inpaint50, 0), &truth)?;
    let problem = Problem::new(y, op, truth.shape())?;
    let config = TraceConfig {
        steps: 10,
        inner_steps: 40,
        ..TraceConfig::default()
    };
    let record = run_trace(&config, &problem, Some(&truth))?;

    println!("x_T psnr {:.2} dB", record.initial_psnr.unwrap_or(f64::NAN));
    for tr in &record.transitions {
        println!(
            "t={:2} delta {:.4} psnr {:.2} dB",
            tr.t,
            tr.delta,
            tr.psnr.unwrap_or(f64::NAN)
        );
    }
    let out = std::env::temp_dir().join("trace_inpainting.pgm");
    write_pnm(&out, &record.reconstruction)?;
    println!("reconstruction written to {}", out.display());
    Ok(())
}
