//! Reverse-mode gradients against central finite differences in f64.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trace_core::autograd::{Graph, Var};
use trace_core::conv::{ConvSpec, Padding};
use trace_core::engine::training_loss;
use trace_core::gradcheck::{finite_difference_check, finite_difference_check_with};
use trace_core::network::{forward_net, init_network, ArchConfig};
use trace_core::operators::{make_anisotropic_blur_with, make_downsample, make_inpaint, make_radon, ForwardOperator};
use trace_core::{Result, Tensor};

const H: f64 = 1e-3;
/// Step for whole networks: deep pre-activations sit within 1e-3 of the
/// leaky-relu kink, which a wider stencil would straddle.
const H_NET: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rand_tensor(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Values in `±[0.1, 1]`, away from the kinks of leaky-relu and clip.
fn off_kink(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| {
        let v = rng.random_range(0.1..1.0);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

/// Weighted sum of squares so every output coordinate carries a distinct weight.
fn reduce(g: &mut Graph<f64>, x: Var) -> Result<Var> {
    let shape = g.value(x).shape().to_vec();
    let w = g.input(rand_tensor(&shape, 999, 0.5, 1.5))?;
    let wx = g.mul(x, w)?;
    g.sum_squares(wx)
}

fn check(name: &str, params: &[Tensor<f64>], f: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var>) {
    let err = finite_difference_check(f, params, H, 7).unwrap();
    assert!(err <= TOL, "{name}: relative error {err:e}");
}

#[test]
fn analytic_quadratic() {
    let p = rand_tensor(&[3, 4], 1, -1.0, 1.0);
    let err = finite_difference_check_with(|g, v| g.sum_squares(v[0]), &[p], H, 0, 12).unwrap();
    assert!(err <= 1e-8, "{err:e}");
}

#[test]
fn elementwise_primitives() {
    let a = rand_tensor(&[2, 3, 3], 1, -1.0, 1.0);
    let b = rand_tensor(&[2, 3, 3], 2, -1.0, 1.0);
    check("add", &[a.clone(), b.clone()], |g, v| {
        let y = g.add(v[0], v[1])?;
        reduce(g, y)
    });
    check("sub", &[a.clone(), b.clone()], |g, v| {
        let y = g.sub(v[0], v[1])?;
        reduce(g, y)
    });
    check("mul", &[a.clone(), b.clone()], |g, v| {
        let y = g.mul(v[0], v[1])?;
        reduce(g, y)
    });
    check("scale", std::slice::from_ref(&a), |g, v| {
        let y = g.scale(v[0], -2.5)?;
        reduce(g, y)
    });
    check("add_bias", &[a.clone(), rand_tensor(&[2], 3, -1.0, 1.0)], |g, v| {
        let y = g.add_bias(v[0], v[1])?;
        reduce(g, y)
    });
    check("sum_squares", std::slice::from_ref(&a), |g, v| g.sum_squares(v[0]));
    check("sigmoid", std::slice::from_ref(&a), |g, v| {
        let y = g.sigmoid(v[0])?;
        reduce(g, y)
    });
    check("leaky_relu", &[off_kink(&[2, 3, 3], 4)], |g, v| {
        let y = g.leaky_relu(v[0], 0.1)?;
        reduce(g, y)
    });
    let inside = Tensor::from_fn(&[2, 3, 3], |i| {
        let v = off_kink(&[18], 5).data()[i];
        0.5 + 0.45 * v
    });
    let straddling = off_kink(&[2, 3, 3], 6).map(|v| 0.5 + 1.5 * v);
    for (name, p) in [("clip inside", inside), ("clip mixed", straddling)] {
        check(name, &[p], |g, v| {
            let y = g.clip(v[0], 0.0, 1.0)?;
            reduce(g, y)
        });
    }
}

#[test]
fn structural_primitives() {
    let a = rand_tensor(&[2, 4, 6], 1, -1.0, 1.0);
    let b = rand_tensor(&[3, 4, 6], 2, -1.0, 1.0);
    check("concat", &[a.clone(), b], |g, v| {
        let y = g.concat(&[v[0], v[1]])?;
        reduce(g, y)
    });
    check("decimate", std::slice::from_ref(&a), |g, v| {
        let y = g.decimate(v[0], 2)?;
        reduce(g, y)
    });
    check("upsample", std::slice::from_ref(&a), |g, v| {
        let y = g.upsample(v[0], 2)?;
        reduce(g, y)
    });
}

#[test]
fn conv2d_input_and_kernel() {
    let x = rand_tensor(&[2, 7, 6], 1, -1.0, 1.0);
    for padding in [Padding::Zero, Padding::Reflect, Padding::Symmetric] {
        for stride in [1, 2] {
            let k = rand_tensor(&[3, 2, 3, 3], 2, -1.0, 1.0);
            let spec = ConvSpec::new(padding).stride(stride);
            check(&format!("conv2d {padding:?} stride {stride}"), &[x.clone(), k], move |g, v| {
                let y = g.conv2d(v[0], v[1], spec)?;
                reduce(g, y)
            });
        }
        let k = rand_tensor(&[2, 1, 5, 5], 3, -1.0, 1.0);
        let spec = ConvSpec::new(padding).depthwise();
        check(&format!("depthwise {padding:?}"), &[x.clone(), k], move |g, v| {
            let y = g.conv2d(v[0], v[1], spec)?;
            reduce(g, y)
        });
    }
}

#[test]
fn operator_nodes() {
    let ops = [
        make_inpaint(8, 8, 0.5, 1).unwrap(),
        make_downsample(2).unwrap(),
        make_anisotropic_blur_with(1.0, 2.0, 30.0, 5),
        make_radon(8, &[0.0, 33.0, 90.0, 140.0], None).unwrap(),
    ];
    for op in ops {
        let op = Arc::new(op);
        let x = rand_tensor(&[1, 8, 8], 4, 0.05, 0.95);
        let name = op.name();
        check(name, &[x], move |g, v| {
            let y = op.apply_in_graph(g, v[0])?;
            reduce(g, y)
        });
    }
}

#[test]
fn two_layer_conv_net() {
    let x = rand_tensor(&[1, 8, 8], 1, 0.0, 1.0);
    let k1 = rand_tensor(&[4, 1, 3, 3], 2, -0.5, 0.5);
    let b1 = rand_tensor(&[4], 3, -0.1, 0.1);
    let k2 = rand_tensor(&[1, 4, 3, 3], 4, -0.5, 0.5);
    let target = rand_tensor(&[1, 8, 8], 5, 0.0, 1.0);
    check("two-layer net", &[k1, b1, k2], move |g, v| {
        let x = g.input(x.clone())?;
        let t = g.input(target.clone())?;
        let h = g.conv2d(x, v[0], ConvSpec::default())?;
        let h = g.add_bias(h, v[1])?;
        let h = g.leaky_relu(h, 0.1)?;
        let y = g.conv2d(h, v[2], ConvSpec::default())?;
        let r = g.sub(y, t)?;
        g.sum_squares(r)
    });
}

fn loss_check(op: ForwardOperator, beta: f64) -> f64 {
    let arch = ArchConfig {
        channels: 1,
        depth: 2,
        width: 4,
        skip: 2,
        kernel: 3,
    };
    let params = init_network(arch, 3).unwrap().cast::<f64>();
    let u = rand_tensor(&[1, 8, 8], 4, 0.0, 1.0);
    let x_prev = rand_tensor(&[1, 8, 8], 5, 0.0, 1.0);
    let truth = rand_tensor(&[1, 8, 8], 6, 0.0, 1.0);
    let y = op.apply(&truth).unwrap();
    let op = Arc::new(op);
    finite_difference_check_with(
        move |g, v| {
            let u = g.input(u.clone())?;
            let p = g.input(x_prev.clone())?;
            let y = g.input(y.clone())?;
            Ok(training_loss(g, &arch, v, u, Some(p), y, &op, beta)?.total)
        },
        &params,
        H_NET,
        11,
        96,
    )
    .unwrap()
}

#[test]
fn full_training_loss() {
    for (op, beta) in [
        (make_inpaint(8, 8, 0.5, 2).unwrap(), 5e-3),
        (make_inpaint(8, 8, 0.5, 2).unwrap(), 0.0),
        (make_anisotropic_blur_with(1.0, 2.0, 30.0, 5), 1.0),
        (make_radon(8, &[0.0, 45.0, 90.0], None).unwrap(), 0.5),
    ] {
        let name = op.name();
        let err = loss_check(op, beta);
        assert!(err <= TOL, "{name} beta={beta}: {err:e}");
    }
}

#[test]
fn full_network_output() {
    let arch = ArchConfig {
        channels: 3,
        depth: 2,
        width: 4,
        skip: 2,
        kernel: 3,
    };
    let params = init_network(arch, 9).unwrap().cast::<f64>();
    let input = rand_tensor(&[3, 8, 8], 1, 0.0, 0.1);
    let err = finite_difference_check_with(
        move |g, v| {
            let x = g.input(input.clone())?;
            let y = forward_net(g, &arch, v, x)?;
            reduce(g, y)
        },
        &params,
        H_NET,
        2,
        96,
    )
    .unwrap();
    assert!(err <= TOL, "{err:e}");
}
