use crate::conv::{conv2d, conv2d_transpose, ConvSpec, Padding};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

use super::ForwardOperator;

/// Anti-aliased decimation: separable triangle low-pass (symmetric padding),
/// then every `factor`-th pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Downsample {
    pub factor: usize,
    taps: Vec<f64>,
}

/// Triangle of width `2·factor − 1`, weights `(factor − |i|) / factor²`.
pub fn triangle_taps(factor: usize) -> Vec<f64> {
    let f = factor as isize;
    (-(f - 1)..f).map(|i| (f - i.abs()) as f64 / (f * f) as f64).collect()
}

pub fn make_downsample(factor: usize) -> Result<ForwardOperator> {
    if factor < 2 {
        return Err(Error::invalid(format!("downsampling factor must be at least 2, got {factor}")));
    }
    Ok(ForwardOperator::Downsample(Downsample {
        factor,
        taps: triangle_taps(factor),
    }))
}

impl Downsample {
    fn spec(&self) -> ConvSpec {
        ConvSpec::new(Padding::Symmetric).stride(self.factor).depthwise()
    }

    fn kernel<T: Scalar>(&self, channels: usize) -> Tensor<T> {
        let k = self.taps.len();
        let plane: Vec<T> = (0..k * k).map(|i| T::lit(self.taps[i / k] * self.taps[i % k])).collect();
        Tensor::from_fn(&[channels, 1, k, k], |i| plane[i % (k * k)])
    }

    pub(crate) fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match input {
            [c, h, w] if h % self.factor == 0 && w % self.factor == 0 => Ok(vec![*c, h / self.factor, w / self.factor]),
            _ => Err(Error::shape(
                "downsample",
                format!("[C,H,W] with extents divisible by {}", self.factor),
                format!("{input:?}"),
            )),
        }
    }

    pub(crate) fn apply<T: Scalar>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.output_shape(x.shape())?;
        conv2d(x, &self.kernel(x.shape()[0]), self.spec())
    }

    pub(crate) fn adjoint<T: Scalar>(&self, r: &Tensor<T>) -> Result<Tensor<T>> {
        let (c, h, w) = r.dims3()?;
        conv2d_transpose(r, &self.kernel(c), &[c, h * self.factor, w * self.factor], self.spec())
    }
}
