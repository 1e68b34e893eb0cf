//! Checks the proximal transition bounds on exactly solvable quadratics:
//! the certificate suite, an explicit error-propagation trace and the
//! bounded-step effect of coupling.
//!
//! `cargo run --release --example verify_theorems`

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trace_core::prox::{
    geometric_bound, remark1_demo, verify_error_propagation, verify_theorems, ProxStep, QuadInstance, Tolerances,
};

fn main() -> trace_core::Result<()> {
    let certs = verify_theorems(16, 100, 0, Tolerances::default())?;
    let failed = certs.iter().filter(|c| !c.pass).count();
    println!("{} certificates, {failed} failed", certs.len());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inst = QuadInstance::random_strongly_convex(8, 0.5, &mut rng)?;
    let steps: Vec<ProxStep> = (0..10).map(|_| ProxStep { inst: inst.clone(), beta: 2.0 }).collect();
    let report = verify_error_propagation(&steps, &[1e-2; 10], &DVector::zeros(8), 2)?;
    report.check(1e-12)?;
    println!("\nt   deviation  bound      contraction");
    for row in &report.rows {
        println!(
            "{:<3} {:.3e}  {:.3e}  {:.3e}",
            row.t,
            row.deviation,
            row.bound,
            row.contraction_bound.unwrap_or(f64::NAN)
        );
    }
    let q = inst.contraction_factor(2.0).unwrap_or(1.0);
    println!("geometric limit {:.3e}", geometric_bound(1e-2, q, 10));

    println!("\nshift  uncoupled  coupled   bound");
    for row in remark1_demo(&inst, &DVector::zeros(8), 2.0, &[1.0, 10.0, 100.0], 3)? {
        println!(
            "{:<6} {:.3e}  {:.3e} {:.3e}",
            row.shift, row.uncoupled_distance, row.coupled_distance, row.coupled_bound
        );
    }
    Ok(())
}
