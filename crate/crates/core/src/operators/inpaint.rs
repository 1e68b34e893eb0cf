use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ForwardOperator;

/// Binary pixel mask shared by all channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    keep: Vec<bool>,
}

impl Mask {
    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn missing_count(&self) -> usize {
        self.keep.iter().filter(|&&k| !k).count()
    }

    pub(crate) fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match input {
            [_, h, w] if (*h, *w) == (self.height, self.width) => Ok(input.to_vec()),
            _ => Err(Error::shape("inpaint", format!("[C,{},{}]", self.height, self.width), format!("{input:?}"))),
        }
    }

    pub(crate) fn apply<T: Scalar>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.output_shape(x.shape())?;
        let mut out = x.clone();
        for plane in out.data_mut().chunks_mut(self.height * self.width) {
            for (v, &k) in plane.iter_mut().zip(&self.keep) {
                if !k {
                    *v = T::zero();
                }
            }
        }
        Ok(out)
    }
}

/// Random mask with exactly `round(missing_fraction·h·w)` dropped pixels,
/// sampled uniformly without replacement.
pub fn make_inpaint(height: usize, width: usize, missing_fraction: f64, seed: u64) -> Result<ForwardOperator> {
    if !(missing_fraction > 0.0 && missing_fraction < 1.0) {
        return Err(Error::invalid(format!("missing fraction must lie in (0,1), got {missing_fraction}")));
    }
    if height == 0 || width == 0 {
        return Err(Error::invalid("mask extents must be positive"));
    }
    let total = height * width;
    let missing = (missing_fraction * total as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![true; total];
    for idx in rand::seq::index::sample(&mut rng, total, missing) {
        keep[idx] = false;
    }
    Ok(ForwardOperator::Inpaint(Mask { height, width, keep }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_of(op: &ForwardOperator) -> &Mask {
        match op {
            ForwardOperator::Inpaint(m) => m,
            _ => unreachable!(),
        }
    }

    #[test]
    fn exact_missing_count() {
        assert_eq!(mask_of(&make_inpaint(4, 4, 0.5, 0).unwrap()).missing_count(), 8);
        assert_eq!(mask_of(&make_inpaint(10, 10, 0.7, 1).unwrap()).missing_count(), 70);
    }

    #[test]
    fn tiny_fraction_is_identity() {
        let op = make_inpaint(4, 4, 0.01, 0).unwrap();
        let x = Tensor::from_fn(&[3, 4, 4], |i| i as f32);
        assert_eq!(op.apply(&x).unwrap(), x);
    }

    #[test]
    fn rejects_fraction_outside_open_interval() {
        for f in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(make_inpaint(4, 4, f, 0).is_err());
        }
    }

    #[test]
    fn idempotent_and_seeded() {
        let op = make_inpaint(8, 8, 0.3, 5).unwrap();
        let x = Tensor::from_fn(&[2, 8, 8], |i| (i as f32).cos());
        let once = op.apply(&x).unwrap();
        assert_eq!(op.apply(&once).unwrap(), once);
        assert_eq!(mask_of(&op), mask_of(&make_inpaint(8, 8, 0.3, 5).unwrap()));
        assert_ne!(mask_of(&op), mask_of(&make_inpaint(8, 8, 0.3, 6).unwrap()));
    }

    #[test]
    fn mask_is_shared_across_channels() {
        let op = make_inpaint(6, 6, 0.5, 2).unwrap();
        let y = op.apply(&Tensor::full(&[3, 6, 6], 1.0f32)).unwrap();
        let planes: Vec<&[f32]> = y.data().chunks(36).collect();
        assert_eq!(planes[0], planes[1]);
        assert_eq!(planes[1], planes[2]);
    }
}
