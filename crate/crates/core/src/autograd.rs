//! Tape-style reverse-mode differentiation.
//!
//! A [`Graph`] records every primitive in creation order, so node indices are
//! already a topological order. [`Graph::backward`] walks the tape once in
//! reverse and accumulates vector-Jacobian products into each input.

use crate::conv::{conv2d, conv2d_kernel_grad, conv2d_transpose, ConvSpec};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use std::sync::Arc;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A linear map with an exact adjoint, usable as a graph node.
pub trait LinearMap<T: Scalar>: Send + Sync {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>>;
    fn adjoint(&self, y: &Tensor<T>) -> Result<Tensor<T>>;
}

enum Op<T: Scalar> {
    Input,
    Param(usize),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddBias(Var, Var),
    Conv2d { input: Var, kernel: Var, spec: ConvSpec },
    Decimate(Var, usize),
    Upsample(Var, usize),
    Concat(Vec<Var>),
    LeakyRelu(Var, T),
    Sigmoid(Var),
    Clip(Var, T, T),
    SumSquares(Var),
    Linear(Var, Arc<dyn LinearMap<T>>),
}

impl<T: Scalar> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddBias(..) => "add_bias",
            Op::Conv2d { .. } => "conv2d",
            Op::Decimate(..) => "decimate",
            Op::Upsample(..) => "upsample",
            Op::Concat(..) => "concat",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Clip(..) => "clip",
            Op::SumSquares(..) => "sum_squares",
            Op::Linear(..) => "linear",
        }
    }
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
}

pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    param_shapes: Vec<Vec<usize>>,
}

/// Gradients of a scalar loss with respect to each registered parameter.
pub struct Gradients<T: Scalar> {
    params: Vec<Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn param(&self, index: usize) -> &Tensor<T> {
        &self.params[index]
    }

    pub fn into_vec(self) -> Vec<Tensor<T>> {
        self.params
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            param_shapes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("graph op `{}`", op.name())));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Constant leaf (no gradient is reported for it).
    pub fn input(&mut self, value: Tensor<T>) -> Result<Var> {
        self.push(value, Op::Input)
    }

    /// Trainable leaf. Parameters are numbered in registration order.
    pub fn param(&mut self, value: Tensor<T>) -> Result<Var> {
        let id = self.param_shapes.len();
        self.param_shapes.push(value.shape().to_vec());
        self.push(value, Op::Param(id))
    }

    pub fn num_params(&self) -> usize {
        self.param_shapes.len()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s))
    }

    /// Adds a per-channel bias `[C]` to a `[C,H,W]` tensor.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).dims3()?;
        let b = self.value(bias);
        if b.shape() != [c] {
            return Err(Error::shape("add_bias", format!("[{c}]"), format!("{:?}", b.shape())));
        }
        let mut out = self.value(x).clone();
        for (ch, plane) in out.data_mut().chunks_mut(h * w).enumerate() {
            let bv = b.data()[ch];
            plane.iter_mut().for_each(|v| *v += bv);
        }
        self.push(out, Op::AddBias(x, bias))
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, spec: ConvSpec) -> Result<Var> {
        let v = conv2d(self.value(input), self.value(kernel), spec)?;
        self.push(v, Op::Conv2d { input, kernel, spec })
    }

    /// Keeps every `factor`-th pixel along both spatial axes, starting at 0.
    pub fn decimate(&mut self, x: Var, factor: usize) -> Result<Var> {
        let v = decimate(self.value(x), factor)?;
        self.push(v, Op::Decimate(x, factor))
    }

    /// Nearest-neighbour upsampling by `factor` along both spatial axes.
    pub fn upsample(&mut self, x: Var, factor: usize) -> Result<Var> {
        let v = upsample_nearest(self.value(x), factor)?;
        self.push(v, Op::Upsample(x, factor))
    }

    /// Channel concatenation of `[C_i,H,W]` tensors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::invalid("concat of zero tensors"));
        }
        let (_, h, w) = self.value(parts[0]).dims3()?;
        let mut channels = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (c, ph, pw) = self.value(p).dims3()?;
            if (ph, pw) != (h, w) {
                return Err(Error::shape("concat", format!("spatial {h}x{w}"), format!("{ph}x{pw}")));
            }
            channels += c;
            data.extend_from_slice(self.value(p).data());
        }
        let v = Tensor::new(vec![channels, h, w], data)?;
        self.push(v, Op::Concat(parts.to_vec()))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Result<Var> {
        let v = self.value(x).map(|a| if a > T::zero() { a } else { slope * a });
        self.push(v, Op::LeakyRelu(x, slope))
    }

    /// Logistic function, kept strictly inside `(0,1)` even where the exact
    /// value rounds to 0 or 1.
    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let lo = T::min_positive_value();
        let hi = T::one() - T::epsilon() / T::lit(2.0);
        let v = self.value(x).map(|a| (T::one() / (T::one() + (-a).exp())).max(lo).min(hi));
        self.push(v, Op::Sigmoid(x))
    }

    pub fn clip(&mut self, x: Var, lo: T, hi: T) -> Result<Var> {
        let v = self.value(x).map(|a| a.max(lo).min(hi));
        self.push(v, Op::Clip(x, lo, hi))
    }

    /// `Σ x²` as a single-element tensor.
    pub fn sum_squares(&mut self, x: Var) -> Result<Var> {
        let mut acc = T::zero();
        for &a in self.value(x).data() {
            acc += a * a;
        }
        self.push(Tensor::scalar(acc), Op::SumSquares(x))
    }

    pub fn linear(&mut self, x: Var, map: Arc<dyn LinearMap<T>>) -> Result<Var> {
        let v = map.forward(self.value(x))?;
        self.push(v, Op::Linear(x, map))
    }

    /// Reverse accumulation from a scalar `loss`. Parameters the loss does not
    /// depend on receive zero gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            return Err(Error::shape("backward", "scalar loss", format!("{:?}", self.value(loss).shape())));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), T::one()));
        let mut params: Vec<Tensor<T>> = self.param_shapes.iter().map(|s| Tensor::zeros(s)).collect();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut acc = |v: Var, contribution: Tensor<T>| -> Result<()> {
                match &mut grads[v.0] {
                    Some(existing) => {
                        for (e, c) in existing.data_mut().iter_mut().zip(contribution.data()) {
                            *e += *c;
                        }
                    }
                    slot @ None => *slot = Some(contribution),
                }
                Ok(())
            };
            match &node.op {
                Op::Input => {}
                Op::Param(id) => params[*id] = g,
                Op::Add(a, b) => {
                    acc(*a, g.clone())?;
                    acc(*b, g)?;
                }
                Op::Sub(a, b) => {
                    acc(*b, g.map(|v| -v))?;
                    acc(*a, g)?;
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |u, v| u * v)?;
                    let gb = g.zip_map(self.value(*a), |u, v| u * v)?;
                    acc(*a, ga)?;
                    acc(*b, gb)?;
                }
                Op::Scale(a, s) => acc(*a, g.scale(*s))?,
                Op::AddBias(x, bias) => {
                    let (c, h, w) = g.dims3()?;
                    let mut gb = Tensor::zeros(&[c]);
                    for (ch, plane) in g.data().chunks(h * w).enumerate() {
                        let mut s = T::zero();
                        for &v in plane {
                            s += v;
                        }
                        gb.data_mut()[ch] = s;
                    }
                    acc(*bias, gb)?;
                    acc(*x, g)?;
                }
                Op::Conv2d { input, kernel, spec } => {
                    let x = self.value(*input);
                    let k = self.value(*kernel);
                    let gx = conv2d_transpose(&g, k, x.shape(), *spec)?;
                    let gk = conv2d_kernel_grad(x, &g, k.shape(), *spec)?;
                    acc(*input, gx)?;
                    acc(*kernel, gk)?;
                }
                Op::Decimate(x, f) => {
                    let gx = decimate_adjoint(&g, self.value(*x).shape(), *f)?;
                    acc(*x, gx)?;
                }
                Op::Upsample(x, f) => {
                    let gx = upsample_adjoint(&g, *f)?;
                    acc(*x, gx)?;
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let shape = self.value(p).shape().to_vec();
                        let n = self.value(p).numel();
                        let slice = g.data()[offset..offset + n].to_vec();
                        offset += n;
                        acc(p, Tensor::new(shape, slice)?)?;
                    }
                }
                Op::LeakyRelu(x, slope) => {
                    let gx = g.zip_map(self.value(*x), |u, a| if a > T::zero() { u } else { *slope * u })?;
                    acc(*x, gx)?;
                }
                Op::Sigmoid(x) => {
                    let gx = g.zip_map(&node.value, |u, y| u * y * (T::one() - y))?;
                    acc(*x, gx)?;
                }
                Op::Clip(x, lo, hi) => {
                    let gx = g.zip_map(self.value(*x), |u, a| if a >= *lo && a <= *hi { u } else { T::zero() })?;
                    acc(*x, gx)?;
                }
                Op::SumSquares(x) => {
                    let two_g = g.data()[0] + g.data()[0];
                    acc(*x, self.value(*x).scale(two_g))?;
                }
                Op::Linear(x, map) => {
                    let gx = map.adjoint(&g)?;
                    self.value(*x).expect_same_shape(&gx, "linear adjoint")?;
                    acc(*x, gx)?;
                }
            }
        }
        Ok(Gradients { params })
    }
}

pub fn decimate<T: Scalar>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let (c, h, w) = x.dims3()?;
    if factor == 0 {
        return Err(Error::invalid("decimation factor must be positive"));
    }
    let (ho, wo) = (h.div_ceil(factor), w.div_ceil(factor));
    let src = x.data();
    let mut out = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        for oy in 0..ho {
            for ox in 0..wo {
                out.push(src[(ch * h + oy * factor) * w + ox * factor]);
            }
        }
    }
    Tensor::new(vec![c, ho, wo], out)
}

/// Zero insertion: the adjoint of [`decimate`].
pub fn decimate_adjoint<T: Scalar>(y: &Tensor<T>, input_shape: &[usize], factor: usize) -> Result<Tensor<T>> {
    let (c, ho, wo) = y.dims3()?;
    let [ci, h, w] = input_shape[..] else {
        return Err(Error::shape("decimate_adjoint", "[C,H,W]", format!("{input_shape:?}")));
    };
    if ci != c || h.div_ceil(factor) != ho || w.div_ceil(factor) != wo {
        return Err(Error::shape("decimate_adjoint", format!("{input_shape:?}/{factor}"), format!("{:?}", y.shape())));
    }
    let mut out = Tensor::zeros(input_shape);
    let dst = out.data_mut();
    for ch in 0..c {
        for oy in 0..ho {
            for ox in 0..wo {
                dst[(ch * h + oy * factor) * w + ox * factor] = y.data()[(ch * ho + oy) * wo + ox];
            }
        }
    }
    Ok(out)
}

pub fn upsample_nearest<T: Scalar>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let (c, h, w) = x.dims3()?;
    if factor == 0 {
        return Err(Error::invalid("upsampling factor must be positive"));
    }
    let (ho, wo) = (h * factor, w * factor);
    let src = x.data();
    let mut out = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        for oy in 0..ho {
            let row = &src[(ch * h + oy / factor) * w..(ch * h + oy / factor + 1) * w];
            for ox in 0..wo {
                out.push(row[ox / factor]);
            }
        }
    }
    Tensor::new(vec![c, ho, wo], out)
}

/// Block sums: the adjoint of [`upsample_nearest`].
pub fn upsample_adjoint<T: Scalar>(y: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let (c, ho, wo) = y.dims3()?;
    if ho % factor != 0 || wo % factor != 0 {
        return Err(Error::shape("upsample_adjoint", format!("extents divisible by {factor}"), format!("{:?}", y.shape())));
    }
    let (h, w) = (ho / factor, wo / factor);
    let mut out = Tensor::zeros(&[c, h, w]);
    let dst = out.data_mut();
    for ch in 0..c {
        for oy in 0..ho {
            for ox in 0..wo {
                dst[(ch * h + oy / factor) * w + ox / factor] += y.data()[(ch * ho + oy) * wo + ox];
            }
        }
    }
    Ok(out)
}
