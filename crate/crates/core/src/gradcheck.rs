//! Central finite-difference check of reverse-mode gradients, replayed in
//! double precision.

use crate::autograd::{Graph, Var};
use crate::error::Result;
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Coordinates probed per check.
pub const DEFAULT_SAMPLES: usize = 48;

/// Errors are measured relative to `max(|analytic|, |numeric|, FLOOR * max|grad|)`
/// so coordinates with vanishing gradient do not divide by ~0.
pub const RELATIVE_FLOOR: f64 = 1e-3;

fn eval<F>(loss_fn: &F, params: &[Tensor<f64>]) -> Result<(Graph<f64>, Var)>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars = params.iter().map(|p| g.param(p.clone())).collect::<Result<Vec<_>>>()?;
    let loss = loss_fn(&mut g, &vars)?;
    Ok((g, loss))
}

pub fn finite_difference_check<F>(loss_fn: F, params: &[Tensor<f64>], h: f64, seed: u64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    finite_difference_check_with(loss_fn, params, h, seed, DEFAULT_SAMPLES)
}

/// Maximum relative error between the analytic gradient and central
/// differences `(L(p+h) − L(p−h)) / 2h` over `samples` coordinates drawn
/// uniformly (with a fixed seed) from all parameters.
pub fn finite_difference_check_with<F>(
    loss_fn: F,
    params: &[Tensor<f64>],
    h: f64,
    seed: u64,
    samples: usize,
) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let total: usize = params.iter().map(Tensor::numel).sum();
    if total == 0 {
        return Ok(0.0);
    }
    let (graph, loss) = eval(&loss_fn, params)?;
    let analytic = graph.backward(loss)?.into_vec();
    let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.max_abs()));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut probe = params.to_vec();
    for _ in 0..samples.min(total) {
        let mut flat = rng.random_range(0..total);
        let mut which = 0;
        while flat >= probe[which].numel() {
            flat -= probe[which].numel();
            which += 1;
        }
        let orig = probe[which].data()[flat];
        probe[which].data_mut()[flat] = orig + h;
        let (g_plus, l_plus) = eval(&loss_fn, &probe)?;
        probe[which].data_mut()[flat] = orig - h;
        let (g_minus, l_minus) = eval(&loss_fn, &probe)?;
        probe[which].data_mut()[flat] = orig;

        let numeric = (g_plus.value(l_plus).item()? - g_minus.value(l_minus).item()?) / (2.0 * h);
        let a = analytic[which].data()[flat];
        let denom = a.abs().max(numeric.abs()).max(RELATIVE_FLOOR * scale);
        if denom > 0.0 {
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
