use crate::conv::{conv2d, conv2d_transpose, ConvSpec, Padding};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

use super::ForwardOperator;

/// Depthwise blur with one kernel shared by every channel, symmetric padding
/// of half the kernel size, and output clipped to `[0,1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Blur {
    size: usize,
    kernel: Vec<f64>,
}

impl Blur {
    pub fn new(size: usize, kernel: Vec<f64>) -> Result<Self> {
        if size.is_multiple_of(2) || kernel.len() != size * size {
            return Err(Error::invalid(format!("blur kernel must be odd-sized and square, got size {size}")));
        }
        if kernel.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::invalid("blur kernel entries must be finite and nonnegative"));
        }
        Ok(Blur { size, kernel })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Row-major `size × size` weights.
    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    fn spec() -> ConvSpec {
        ConvSpec::new(Padding::Symmetric).depthwise()
    }

    fn kernel_tensor<T: Scalar>(&self, channels: usize) -> Tensor<T> {
        let kk = self.size * self.size;
        Tensor::from_fn(&[channels, 1, self.size, self.size], |i| T::lit(self.kernel[i % kk]))
    }

    pub(crate) fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match input {
            [_, _, _] => Ok(input.to_vec()),
            _ => Err(Error::shape("blur", "[C,H,W]", format!("{input:?}"))),
        }
    }

    pub(crate) fn convolve<T: Scalar>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (c, _, _) = x.dims3()?;
        conv2d(x, &self.kernel_tensor(c), Self::spec())
    }

    pub(crate) fn convolve_adjoint<T: Scalar>(&self, r: &Tensor<T>) -> Result<Tensor<T>> {
        let (c, _, _) = r.dims3()?;
        conv2d_transpose(r, &self.kernel_tensor(c), r.shape(), Self::spec())
    }
}

fn normalized(mut k: Vec<f64>) -> Vec<f64> {
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Line of `length` pixels through the kernel centre at `angle_deg`
/// (counter-clockwise from the +x axis, rows pointing down), normalized to
/// unit sum.
pub fn motion_kernel(length: usize, angle_deg: f64, size: usize) -> Vec<f64> {
    assert!(size % 2 == 1 && length >= 1 && length <= size);
    let c = (size / 2) as f64;
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let half = (length as f64 - 1.0) / 2.0;
    let samples = 8 * length;
    let mut k = vec![0.0; size * size];
    for i in 0..samples {
        let s = if samples > 1 { -half + 2.0 * half * i as f64 / (samples - 1) as f64 } else { 0.0 };
        let col = (c + s * cos).round() as usize;
        let row = (c - s * sin).round() as usize;
        k[row * size + col] = 1.0;
    }
    normalized(k)
}

/// Rotated anisotropic Gaussian sampled at integer offsets from the centre.
pub fn anisotropic_gaussian_kernel(sigma_x: f64, sigma_y: f64, angle_deg: f64, size: usize) -> Vec<f64> {
    assert!(size % 2 == 1 && sigma_x > 0.0 && sigma_y > 0.0);
    let half = (size / 2) as isize;
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let mut k = Vec::with_capacity(size * size);
    for dy in -half..=half {
        for dx in -half..=half {
            let (dx, dy) = (dx as f64, dy as f64);
            let u = dx * cos + dy * sin;
            let v = -dx * sin + dy * cos;
            k.push((-0.5 * (u * u / (sigma_x * sigma_x) + v * v / (sigma_y * sigma_y))).exp());
        }
    }
    normalized(k)
}

/// Length 21 at 45° in a 21×21 kernel.
pub fn make_motion_blur() -> ForwardOperator {
    make_motion_blur_with(21, 45.0, 21)
}

pub fn make_motion_blur_with(length: usize, angle_deg: f64, size: usize) -> ForwardOperator {
    ForwardOperator::Blur(Blur::new(size, motion_kernel(length, angle_deg, size)).expect("valid motion kernel"))
}

/// σx = 3, σy = 8, rotated by 30°, in a 21×21 kernel.
pub fn make_anisotropic_blur() -> ForwardOperator {
    make_anisotropic_blur_with(3.0, 8.0, 30.0, 21)
}

pub fn make_anisotropic_blur_with(sigma_x: f64, sigma_y: f64, angle_deg: f64, size: usize) -> ForwardOperator {
    let k = anisotropic_gaussian_kernel(sigma_x, sigma_y, angle_deg, size);
    ForwardOperator::Blur(Blur::new(size, k).expect("valid gaussian kernel"))
}
