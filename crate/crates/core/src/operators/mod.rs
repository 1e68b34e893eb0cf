//! Degradation models `y = A(x)` and their adjoints.
//!
//! Every operator acts on images `[C,H,W]`. All are linear except blur, which
//! clips its output to `[0,1]`; for blur, [`ForwardOperator::apply_linear`] and
//! [`ForwardOperator::adjoint`] refer to the convolution alone.

mod blur;
mod downsample;
mod inpaint;
mod radon;

pub use blur::{anisotropic_gaussian_kernel, make_anisotropic_blur, make_anisotropic_blur_with, make_motion_blur, make_motion_blur_with, motion_kernel, Blur};
pub use downsample::{make_downsample, triangle_taps, Downsample};
pub use inpaint::{make_inpaint, Mask};
pub use radon::{default_detectors, limited_angle_angles, make_radon, sparse_view_angles, Radon, Sinogram, SparseMatrix};

use crate::autograd::{Graph, LinearMap, Var};
use crate::error::Result;
use crate::tensor::{Scalar, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::sync::Arc;

#[derive(Clone, Debug)]
pub enum ForwardOperator {
    Inpaint(Mask),
    Downsample(Downsample),
    Blur(Blur),
    Radon(Radon),
}

impl ForwardOperator {
    pub fn name(&self) -> &'static str {
        match self {
            ForwardOperator::Inpaint(_) => "inpaint",
            ForwardOperator::Downsample(_) => "downsample",
            ForwardOperator::Blur(_) => "blur",
            ForwardOperator::Radon(_) => "radon",
        }
    }

    /// False only for blur, whose output is clipped.
    pub fn is_linear(&self) -> bool {
        !matches!(self, ForwardOperator::Blur(_))
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            ForwardOperator::Inpaint(m) => m.output_shape(input),
            ForwardOperator::Downsample(d) => d.output_shape(input),
            ForwardOperator::Blur(b) => b.output_shape(input),
            ForwardOperator::Radon(r) => r.output_shape(input),
        }
    }

    /// Full forward model, including the clip for blur.
    pub fn apply<T: Scalar>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.apply_linear(x)?;
        Ok(match self {
            ForwardOperator::Blur(_) => y.map(|v| v.max(T::zero()).min(T::one())),
            _ => y,
        })
    }

    pub fn apply_linear<T: Scalar>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            ForwardOperator::Inpaint(m) => m.apply(x),
            ForwardOperator::Downsample(d) => d.apply(x),
            ForwardOperator::Blur(b) => b.convolve(x),
            ForwardOperator::Radon(r) => r.apply(x),
        }
    }

    /// Exact adjoint of [`ForwardOperator::apply_linear`].
    pub fn adjoint<T: Scalar>(&self, r: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            ForwardOperator::Inpaint(m) => m.apply(r),
            ForwardOperator::Downsample(d) => d.adjoint(r),
            ForwardOperator::Blur(b) => b.convolve_adjoint(r),
            ForwardOperator::Radon(rd) => rd.adjoint(r),
        }
    }

    /// Records `A(x)` on a graph; the clip of a blur operator is a separate
    /// node so its subgradient convention applies.
    pub fn apply_in_graph<T: Scalar>(self: &Arc<Self>, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let map: Arc<dyn LinearMap<T>> = self.clone();
        let y = g.linear(x, map)?;
        match **self {
            ForwardOperator::Blur(_) => g.clip(y, T::zero(), T::one()),
            _ => Ok(y),
        }
    }
}

impl<T: Scalar> LinearMap<T> for ForwardOperator {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.apply_linear(x)
    }

    fn adjoint(&self, y: &Tensor<T>) -> Result<Tensor<T>> {
        ForwardOperator::adjoint(self, y)
    }
}

/// Dot-product test `max |⟨Ax,y⟩ − ⟨x,Aᵀy⟩| / (‖Ax‖‖y‖)` over seeded Gaussian
/// pairs, evaluated in single precision with double-precision inner products.
/// For blur this checks the convolution part.
pub fn adjoint_check(op: &ForwardOperator, input_shape: &[usize], trials: usize, seed: u64) -> Result<f64> {
    let out_shape = op.output_shape(input_shape)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = |shape: &[usize]| -> Tensor<f32> {
        Tensor::from_fn(shape, |_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v as f32
        })
    };
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let x = gauss(input_shape);
        let y = gauss(&out_shape);
        let ax = op.apply_linear(&x)?;
        let aty = op.adjoint(&y)?;
        let lhs = ax.dot(&y)?;
        let rhs = x.dot(&aty)?;
        let scale = ax.norm() * y.norm();
        if scale > 0.0 {
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_mask_passes_adjoint_check_exactly() {
        let op = make_inpaint(4, 4, 0.01, 0).unwrap();
        assert_eq!(adjoint_check(&op, &[1, 4, 4], 10, 1).unwrap(), 0.0);
    }

    #[test]
    fn every_linear_operator_has_a_true_adjoint() {
        let cases: Vec<(ForwardOperator, Vec<usize>)> = vec![
            (make_inpaint(16, 16, 0.5, 3).unwrap(), vec![3, 16, 16]),
            (make_downsample(2).unwrap(), vec![3, 16, 16]),
            (make_downsample(4).unwrap(), vec![1, 16, 16]),
            (make_motion_blur(), vec![3, 24, 24]),
            (make_anisotropic_blur(), vec![1, 24, 24]),
            (make_radon(16, &sparse_view_angles(10), None).unwrap(), vec![1, 16, 16]),
        ];
        for (op, shape) in cases {
            let err = adjoint_check(&op, &shape, 50, 11).unwrap();
            assert!(err <= 1e-5, "{} {err}", op.name());
        }
    }

    #[test]
    fn blur_clip_is_inactive_for_in_range_images() {
        let op = make_anisotropic_blur();
        let x = Tensor::from_fn(&[1, 24, 24], |i| ((i * 37 % 101) as f32) / 100.0);
        assert_eq!(op.apply(&x).unwrap(), op.apply_linear(&x).unwrap());
    }

    #[test]
    fn graph_application_matches_direct_application() {
        let op = Arc::new(make_motion_blur_with(5, 30.0, 7));
        let x = Tensor::from_fn(&[2, 8, 8], |i| (i as f64 * 0.31).sin() * 0.8 + 0.5);
        let mut g = Graph::<f64>::new();
        let xv = g.input(x.clone()).unwrap();
        let y = op.apply_in_graph(&mut g, xv).unwrap();
        assert_eq!(g.value(y), &op.apply(&x).unwrap());
    }
}
