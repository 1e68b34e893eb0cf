//! Untrained encoder-decoder prior.
//!
//! Per level `l = 0..depth` the encoder applies a stride-2 3×3 conv and a
//! stride-1 3×3 conv (leaky-relu after each), and a 1×1 conv taps the level's
//! input as a skip branch. The decoder upsamples ×2 (nearest), concatenates
//! the matching skip, and applies a 3×3 conv + leaky-relu. A final 1×1 conv
//! and sigmoid map back to the input channels, so outputs lie in `(0,1)`.
//! All convolutions inside the network use zero padding.

use crate::autograd::{Graph, Var};
use crate::conv::ConvSpec;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub channels: usize,
    pub depth: usize,
    pub width: usize,
    /// Channels of each skip branch; 0 disables skips.
    pub skip: usize,
    pub kernel: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            channels: 1,
            depth: 3,
            width: 16,
            skip: 4,
            kernel: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub fan_in: usize,
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::invalid(format!("depth, width and channels must be positive: {self:?}")));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::invalid(format!("kernel size must be odd, got {}", self.kernel)));
        }
        Ok(())
    }

    /// Required divisor of the spatial extents.
    pub fn stride_multiple(&self) -> usize {
        1 << self.depth
    }

    /// Weight and bias tensors in the order `forward` consumes them.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let (w, s, k) = (self.width, self.skip, self.kernel);
        let mut out = Vec::new();
        let mut push = |name: String, cout: usize, cin: usize, ks: usize| {
            let fan_in = cin * ks * ks;
            out.push(LayerSpec {
                name: format!("{name}.weight"),
                shape: vec![cout, cin, ks, ks],
                fan_in,
            });
            out.push(LayerSpec {
                name: format!("{name}.bias"),
                shape: vec![cout],
                fan_in,
            });
        };
        for l in 0..self.depth {
            let cin = if l == 0 { self.channels } else { w };
            if s > 0 {
                push(format!("skip{l}"), s, cin, 1);
            }
            push(format!("down{l}"), w, cin, k);
            push(format!("conv{l}"), w, w, k);
        }
        for l in (0..self.depth).rev() {
            push(format!("up{l}"), w, w + s, k);
        }
        push("out".into(), self.channels, w, 1);
        out
    }

    /// Σ over levels of `w·c_l·k² + w·w·k² + s·c_l + 2w + s` (with
    /// `c_0 = channels`, `c_l = w` otherwise), plus `depth·(w·(w+s)·k² + w)`
    /// for the decoder and `channels·w + channels` for the output layer.
    pub fn param_count(&self) -> usize {
        let (w, s, k2, c) = (self.width, self.skip, self.kernel * self.kernel, self.channels);
        let encoder: usize = (0..self.depth)
            .map(|l| {
                let cl = if l == 0 { c } else { w };
                w * cl * k2 + w * w * k2 + s * cl + 2 * w + s
            })
            .sum();
        encoder + self.depth * (w * (w + s) * k2 + w) + c * w + c
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub arch: ArchConfig,
    pub seed: u64,
    pub tensors: Vec<Tensor<f32>>,
}

impl NetworkParams {
    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn cast<T: Scalar>(&self) -> Vec<Tensor<T>> {
        self.tensors.iter().map(Tensor::cast).collect()
    }
}

/// Kaiming-uniform weights in `±√(6/fan_in)`, zero biases.
pub fn init_network(arch: ArchConfig, seed: u64) -> Result<NetworkParams> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors = arch
        .layers()
        .into_iter()
        .map(|layer| {
            if layer.shape.len() == 1 {
                Tensor::zeros(&layer.shape)
            } else {
                let bound = (6.0 / layer.fan_in as f64).sqrt() as f32;
                Tensor::from_fn(&layer.shape, |_| rng.random_range(-bound..=bound))
            }
        })
        .collect();
    Ok(NetworkParams { arch, seed, tensors })
}

fn conv_block<T: Scalar>(g: &mut Graph<T>, x: Var, w: Var, b: Var, stride: usize, act: bool) -> Result<Var> {
    let y = g.conv2d(x, w, ConvSpec::default().stride(stride))?;
    let y = g.add_bias(y, b)?;
    if act {
        g.leaky_relu(y, T::lit(LEAKY_SLOPE))
    } else {
        Ok(y)
    }
}

/// Builds the forward pass on `g`; `params` are graph handles in
/// [`ArchConfig::layers`] order.
pub fn forward_net<T: Scalar>(g: &mut Graph<T>, arch: &ArchConfig, params: &[Var], input: Var) -> Result<Var> {
    arch.validate()?;
    let expected = arch.layers().len();
    if params.len() != expected {
        return Err(Error::shape("forward_net", format!("{expected} parameter tensors"), params.len().to_string()));
    }
    let (c, h, w) = g.value(input).dims3()?;
    let m = arch.stride_multiple();
    if c != arch.channels || h % m != 0 || w % m != 0 {
        return Err(Error::shape(
            "forward_net",
            format!("[{}, H, W] with H, W divisible by {m}", arch.channels),
            format!("{:?}", g.value(input).shape()),
        ));
    }

    let mut p = params.iter().copied();
    let mut next = || p.next().expect("parameter count checked above");
    let mut feats = input;
    let mut skips = Vec::with_capacity(arch.depth);
    for _ in 0..arch.depth {
        if arch.skip > 0 {
            let (sw, sb) = (next(), next());
            skips.push(Some(conv_block(g, feats, sw, sb, 1, true)?));
        } else {
            skips.push(None);
        }
        let (dw, db) = (next(), next());
        feats = conv_block(g, feats, dw, db, 2, true)?;
        let (cw, cb) = (next(), next());
        feats = conv_block(g, feats, cw, cb, 1, true)?;
    }
    for skip in skips.into_iter().rev() {
        let up = g.upsample(feats, 2)?;
        let merged = match skip {
            Some(s) => g.concat(&[up, s])?,
            None => up,
        };
        let (uw, ub) = (next(), next());
        feats = conv_block(g, merged, uw, ub, 1, true)?;
    }
    let (ow, ob) = (next(), next());
    let logits = conv_block(g, feats, ow, ob, 1, false)?;
    g.sigmoid(logits)
}

/// Evaluates `D_θ(input)` without keeping a graph around.
pub fn evaluate(params: &NetworkParams, input: &Tensor<f32>) -> Result<Tensor<f32>> {
    let mut g = Graph::new();
    let vars = params.tensors.iter().map(|t| g.param(t.clone())).collect::<Result<Vec<_>>>()?;
    let x = g.input(input.clone())?;
    let out = forward_net(&mut g, &params.arch, &vars, x)?;
    Ok(g.value(out).clone())
}
