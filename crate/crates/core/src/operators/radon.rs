//! Parallel-beam Radon transform as an explicit sparse system matrix.
//!
//! Pixel `(i, j)` of an `n × n` image has centre `x = j − (n−1)/2`,
//! `y = (n−1)/2 − i`. The ray for angle `θ` and detector `d` is the line
//! `x·cosθ + y·sinθ = s_d` with `s_d = d − (D−1)/2`. It is sampled at unit
//! steps along `(−sinθ, cosθ)`; each sample spreads weight 1 over the four
//! neighbouring pixels by bilinear interpolation.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

use super::ForwardOperator;

/// Compressed sparse rows with `f64` weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    pub rows: usize,
    pub cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().map(|&c| c as usize).zip(self.values[span].iter().copied())
    }

    fn mul_vec<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        (0..self.rows)
            .map(|r| {
                let mut acc = 0.0f64;
                for (c, w) in self.row(r) {
                    acc += w * x[c].as_f64();
                }
                T::lit(acc)
            })
            .collect()
    }

    fn transpose_mul_vec<T: Scalar>(&self, y: &[T]) -> Vec<T> {
        let mut acc = vec![0.0f64; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            let yr = yr.as_f64();
            for (c, w) in self.row(r) {
                acc[c] += w * yr;
            }
        }
        acc.into_iter().map(T::lit).collect()
    }
}

/// Projection data `[num_angles, num_detectors]` with its angles in degrees.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    pub values: Tensor<f32>,
    pub angles: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Radon {
    pub n: usize,
    pub angles: Vec<f64>,
    pub detectors: usize,
    matrix: SparseMatrix,
}

/// `ceil(√2·n)` so the image diagonal is covered.
pub fn default_detectors(n: usize) -> usize {
    (std::f64::consts::SQRT_2 * n as f64).ceil() as usize
}

/// `views` angles uniformly over `[0°, 180°)`.
pub fn sparse_view_angles(views: usize) -> Vec<f64> {
    (0..views).map(|i| 180.0 * i as f64 / views as f64).collect()
}

/// 0°, 1°, …, 119°.
pub fn limited_angle_angles() -> Vec<f64> {
    (0..120).map(f64::from).collect()
}

pub fn make_radon(n: usize, angles: &[f64], detectors: Option<usize>) -> Result<ForwardOperator> {
    if n < 2 {
        return Err(Error::invalid(format!("radon image side must be at least 2, got {n}")));
    }
    if angles.is_empty() {
        return Err(Error::invalid("radon transform needs at least one angle"));
    }
    let detectors = detectors.unwrap_or_else(|| default_detectors(n));
    if detectors == 0 {
        return Err(Error::invalid("radon transform needs at least one detector"));
    }
    let matrix = system_matrix(n, angles, detectors);
    Ok(ForwardOperator::Radon(Radon {
        n,
        angles: angles.to_vec(),
        detectors,
        matrix,
    }))
}

fn system_matrix(n: usize, angles: &[f64], detectors: usize) -> SparseMatrix {
    let centre = (n as f64 - 1.0) / 2.0;
    let det_centre = (detectors as f64 - 1.0) / 2.0;
    let reach = (n as f64 * std::f64::consts::SQRT_2 / 2.0).ceil() as i64 + 1;
    let mut indptr = vec![0];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    let mut row: Vec<(u32, f64)> = Vec::new();
    for &angle in angles {
        let (sin, cos) = angle.to_radians().sin_cos();
        for d in 0..detectors {
            let s = d as f64 - det_centre;
            row.clear();
            for step in -reach..=reach {
                let t = step as f64;
                let x = s * cos - t * sin;
                let y = s * sin + t * cos;
                let fx = x + centre;
                let fy = centre - y;
                let (j0, i0) = (fx.floor(), fy.floor());
                let (ax, ay) = (fx - j0, fy - i0);
                for (di, wy) in [(0, 1.0 - ay), (1, ay)] {
                    for (dj, wx) in [(0, 1.0 - ax), (1, ax)] {
                        let (i, j) = (i0 as i64 + di, j0 as i64 + dj);
                        let w = wx * wy;
                        if w > 0.0 && (0..n as i64).contains(&i) && (0..n as i64).contains(&j) {
                            row.push(((i as usize * n + j as usize) as u32, w));
                        }
                    }
                }
            }
            row.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < row.len() {
                let col = row[k].0;
                let mut w = 0.0;
                while k < row.len() && row[k].0 == col {
                    w += row[k].1;
                    k += 1;
                }
                indices.push(col);
                values.push(w);
            }
            indptr.push(indices.len());
        }
    }
    SparseMatrix {
        rows: angles.len() * detectors,
        cols: n * n,
        indptr,
        indices,
        values,
    }
}

impl Radon {
    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub(crate) fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input != [1, self.n, self.n] {
            return Err(Error::shape("radon", format!("[1,{},{}]", self.n, self.n), format!("{input:?}")));
        }
        Ok(vec![self.angles.len(), self.detectors])
    }

    pub(crate) fn apply<T: Scalar>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.output_shape(x.shape())?;
        Tensor::new(shape, self.matrix.mul_vec(x.data()))
    }

    pub(crate) fn adjoint<T: Scalar>(&self, r: &Tensor<T>) -> Result<Tensor<T>> {
        if r.shape() != [self.angles.len(), self.detectors] {
            return Err(Error::shape(
                "radon adjoint",
                format!("[{},{}]", self.angles.len(), self.detectors),
                format!("{:?}", r.shape()),
            ));
        }
        Tensor::new(vec![1, self.n, self.n], self.matrix.transpose_mul_vec(r.data()))
    }

    pub fn sinogram(&self, x: &Tensor<f32>) -> Result<Sinogram> {
        Ok(Sinogram {
            values: self.apply(x)?,
            angles: self.angles.clone(),
        })
    }
}
