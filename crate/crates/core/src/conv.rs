//! Same-padded 2-D convolution (cross-correlation) with its two adjoints.
//!
//! Geometry: a kernel of odd size `k` is centred with `p = (k-1)/2` taps on
//! each side; output pixel `o` along an axis reads input `o*stride + tap - p`,
//! so each output extent is `ceil(n / stride)`. Out-of-range indices are
//! dropped (zero padding) or folded back into the image (reflect, symmetric).
//! All loops run in a fixed nesting order, so results are bitwise reproducible.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Zero,
    /// Mirror without repeating the edge sample: `-1 -> 1`.
    Reflect,
    /// Mirror repeating the edge sample: `-1 -> 0`.
    Symmetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub padding: Padding,
    pub stride: usize,
    pub depthwise: bool,
}

impl ConvSpec {
    pub fn new(padding: Padding) -> Self {
        ConvSpec {
            padding,
            stride: 1,
            depthwise: false,
        }
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn depthwise(mut self) -> Self {
        self.depthwise = true;
        self
    }
}

impl Default for ConvSpec {
    fn default() -> Self {
        ConvSpec::new(Padding::Zero)
    }
}

pub(crate) fn fold_index(i: isize, n: usize, padding: Padding) -> Option<usize> {
    let n_i = n as isize;
    if (0..n_i).contains(&i) {
        return Some(i as usize);
    }
    match padding {
        Padding::Zero => None,
        Padding::Symmetric => {
            let m = i.rem_euclid(2 * n_i);
            Some(if m < n_i { m } else { 2 * n_i - 1 - m } as usize)
        }
        Padding::Reflect => {
            if n == 1 {
                return Some(0);
            }
            let period = 2 * n_i - 2;
            let m = i.rem_euclid(period);
            Some(if m < n_i { m } else { period - m } as usize)
        }
    }
}

/// Maximal stretch where output index advances by 1 and input by `step`.
#[derive(Clone, Copy, Debug)]
struct Run {
    out: usize,
    inp: usize,
    len: usize,
    step: isize,
}

fn axis_runs(n_in: usize, n_out: usize, k: usize, stride: usize, padding: Padding) -> Vec<Vec<Run>> {
    let p = (k - 1) / 2;
    (0..k)
        .map(|tap| {
            let mut runs: Vec<Run> = Vec::new();
            for o in 0..n_out {
                let raw = (o * stride + tap) as isize - p as isize;
                let Some(i) = fold_index(raw, n_in, padding) else {
                    continue;
                };
                if let Some(last) = runs.last_mut() {
                    let next_out = last.out + last.len;
                    if next_out == o {
                        if last.len == 1 {
                            last.step = i as isize - last.inp as isize;
                            last.len = 2;
                            continue;
                        }
                        if last.inp as isize + last.step * last.len as isize == i as isize {
                            last.len += 1;
                            continue;
                        }
                    }
                }
                runs.push(Run {
                    out: o,
                    inp: i,
                    len: 1,
                    step: stride as isize,
                });
            }
            runs
        })
        .collect()
}

struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kc: usize,
    k: usize,
    ho: usize,
    wo: usize,
    rows: Vec<Vec<Run>>,
    cols: Vec<Vec<Run>>,
    depthwise: bool,
}

impl Geometry {
    fn new(input: &[usize], kernel: &[usize], spec: ConvSpec) -> Result<Self> {
        let [cin, h, w] = input[..] else {
            return Err(Error::shape("conv2d", "input [Cin,H,W]", format!("{input:?}")));
        };
        let [cout, kc, kh, kw] = kernel[..] else {
            return Err(Error::shape("conv2d", "kernel [Cout,Cin,k,k]", format!("{kernel:?}")));
        };
        if kh != kw {
            return Err(Error::shape("conv2d", "square kernel", format!("{kernel:?}")));
        }
        if kh % 2 == 0 {
            return Err(Error::invalid(format!("conv2d kernel size must be odd, got {kh}")));
        }
        if spec.stride == 0 {
            return Err(Error::invalid("conv2d stride must be positive"));
        }
        if spec.depthwise {
            if kc != 1 || cout != cin {
                return Err(Error::shape("conv2d (depthwise)", format!("kernel [{cin},1,k,k]"), format!("{kernel:?}")));
            }
        } else if kc != cin {
            return Err(Error::shape("conv2d", format!("kernel with {cin} input channels"), format!("{kernel:?}")));
        }
        let ho = h.div_ceil(spec.stride);
        let wo = w.div_ceil(spec.stride);
        Ok(Geometry {
            cin,
            h,
            w,
            cout,
            kc,
            k: kh,
            ho,
            wo,
            rows: axis_runs(h, ho, kh, spec.stride, spec.padding),
            cols: axis_runs(w, wo, kh, spec.stride, spec.padding),
            depthwise: spec.depthwise,
        })
    }

    fn input_channels(&self, co: usize) -> std::ops::Range<usize> {
        if self.depthwise {
            co..co + 1
        } else {
            0..self.cin
        }
    }

    #[inline]
    fn kernel_offset(&self, co: usize, ci: usize, ky: usize) -> usize {
        let kci = if self.depthwise { 0 } else { ci };
        ((co * self.kc + kci) * self.k + ky) * self.k
    }

    /// Visits every (output row, input row, kernel row) triple in a fixed order.
    fn for_each_row(&self, co: usize, mut f: impl FnMut(usize, usize, usize, usize)) {
        for ci in self.input_channels(co) {
            for ky in 0..self.k {
                for run in &self.rows[ky] {
                    for r in 0..run.len {
                        let oy = run.out + r;
                        let iy = (run.inp as isize + run.step * r as isize) as usize;
                        f(ci, ky, oy, iy);
                    }
                }
            }
        }
    }
}

/// Cross-correlates `input` `[Cin,H,W]` with `kernel` `[Cout,Cin,k,k]`
/// (or `[C,1,k,k]` when depthwise).
pub fn conv2d<T: Scalar>(input: &Tensor<T>, kernel: &Tensor<T>, spec: ConvSpec) -> Result<Tensor<T>> {
    let g = Geometry::new(input.shape(), kernel.shape(), spec)?;
    let x = input.data();
    let kd = kernel.data();
    let mut out = vec![T::zero(); g.cout * g.ho * g.wo];
    for co in 0..g.cout {
        let out_plane = &mut out[co * g.ho * g.wo..(co + 1) * g.ho * g.wo];
        g.for_each_row(co, |ci, ky, oy, iy| {
            let in_row = &x[(ci * g.h + iy) * g.w..(ci * g.h + iy + 1) * g.w];
            let out_row = &mut out_plane[oy * g.wo..(oy + 1) * g.wo];
            let koff = g.kernel_offset(co, ci, ky);
            for kx in 0..g.k {
                let wv = kd[koff + kx];
                for run in &g.cols[kx] {
                    let dst = &mut out_row[run.out..run.out + run.len];
                    if run.step == 1 {
                        for (d, &s) in dst.iter_mut().zip(&in_row[run.inp..run.inp + run.len]) {
                            *d += wv * s;
                        }
                    } else {
                        for (j, d) in dst.iter_mut().enumerate() {
                            *d += wv * in_row[(run.inp as isize + run.step * j as isize) as usize];
                        }
                    }
                }
            }
        });
    }
    Tensor::new(vec![g.cout, g.ho, g.wo], out)
}

/// Adjoint of [`conv2d`] with respect to its input: maps an output-space
/// tensor back to `input_shape`.
pub fn conv2d_transpose<T: Scalar>(
    grad_out: &Tensor<T>,
    kernel: &Tensor<T>,
    input_shape: &[usize],
    spec: ConvSpec,
) -> Result<Tensor<T>> {
    let g = Geometry::new(input_shape, kernel.shape(), spec)?;
    if grad_out.shape() != [g.cout, g.ho, g.wo] {
        return Err(Error::shape(
            "conv2d_transpose",
            format!("[{}, {}, {}]", g.cout, g.ho, g.wo),
            format!("{:?}", grad_out.shape()),
        ));
    }
    let gy = grad_out.data();
    let kd = kernel.data();
    let mut gx = vec![T::zero(); g.cin * g.h * g.w];
    for co in 0..g.cout {
        let gout_plane = &gy[co * g.ho * g.wo..(co + 1) * g.ho * g.wo];
        g.for_each_row(co, |ci, ky, oy, iy| {
            let gin_row = &mut gx[(ci * g.h + iy) * g.w..(ci * g.h + iy + 1) * g.w];
            let gout_row = &gout_plane[oy * g.wo..(oy + 1) * g.wo];
            let koff = g.kernel_offset(co, ci, ky);
            for kx in 0..g.k {
                let wv = kd[koff + kx];
                for run in &g.cols[kx] {
                    let src = &gout_row[run.out..run.out + run.len];
                    if run.step == 1 {
                        for (d, &s) in gin_row[run.inp..run.inp + run.len].iter_mut().zip(src) {
                            *d += wv * s;
                        }
                    } else {
                        for (j, &s) in src.iter().enumerate() {
                            gin_row[(run.inp as isize + run.step * j as isize) as usize] += wv * s;
                        }
                    }
                }
            }
        });
    }
    Tensor::new(input_shape.to_vec(), gx)
}

/// Gradient of `⟨conv2d(input, K), grad_out⟩` with respect to the kernel `K`.
pub fn conv2d_kernel_grad<T: Scalar>(
    input: &Tensor<T>,
    grad_out: &Tensor<T>,
    kernel_shape: &[usize],
    spec: ConvSpec,
) -> Result<Tensor<T>> {
    let g = Geometry::new(input.shape(), kernel_shape, spec)?;
    if grad_out.shape() != [g.cout, g.ho, g.wo] {
        return Err(Error::shape(
            "conv2d_kernel_grad",
            format!("[{}, {}, {}]", g.cout, g.ho, g.wo),
            format!("{:?}", grad_out.shape()),
        ));
    }
    let x = input.data();
    let gy = grad_out.data();
    let mut gk = vec![T::zero(); kernel_shape.iter().product()];
    for co in 0..g.cout {
        let gout_plane = &gy[co * g.ho * g.wo..(co + 1) * g.ho * g.wo];
        g.for_each_row(co, |ci, ky, oy, iy| {
            let in_row = &x[(ci * g.h + iy) * g.w..(ci * g.h + iy + 1) * g.w];
            let gout_row = &gout_plane[oy * g.wo..(oy + 1) * g.wo];
            let koff = g.kernel_offset(co, ci, ky);
            for kx in 0..g.k {
                let mut acc = T::zero();
                for run in &g.cols[kx] {
                    let src = &gout_row[run.out..run.out + run.len];
                    if run.step == 1 {
                        for (&a, &b) in src.iter().zip(&in_row[run.inp..run.inp + run.len]) {
                            acc += a * b;
                        }
                    } else {
                        for (j, &a) in src.iter().enumerate() {
                            acc += a * in_row[(run.inp as isize + run.step * j as isize) as usize];
                        }
                    }
                }
                gk[koff + kx] += acc;
            }
        });
    }
    Tensor::new(kernel_shape.to_vec(), gk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    /// Direct evaluation of the same-padded correlation, one output at a time.
    fn naive(x: &Tensor<f64>, k: &Tensor<f64>, spec: ConvSpec) -> Tensor<f64> {
        let (cin, h, w) = x.dims3().unwrap();
        let (cout, kc, ks) = (k.shape()[0], k.shape()[1], k.shape()[2]);
        let p = (ks - 1) as isize / 2;
        let (ho, wo) = (h.div_ceil(spec.stride), w.div_ceil(spec.stride));
        let mut out = Tensor::zeros(&[cout, ho, wo]);
        for co in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = 0.0;
                    for c in 0..kc {
                        let ci = if spec.depthwise { co } else { c };
                        for ky in 0..ks {
                            for kx in 0..ks {
                                let iy = (oy * spec.stride + ky) as isize - p;
                                let ix = (ox * spec.stride + kx) as isize - p;
                                let (Some(iy), Some(ix)) =
                                    (fold_index(iy, h, spec.padding), fold_index(ix, w, spec.padding))
                                else {
                                    continue;
                                };
                                acc += k.data()[((co * kc + c) * ks + ky) * ks + kx] * x.data()[(ci * h + iy) * w + ix];
                            }
                        }
                    }
                    out.data_mut()[(co * ho + oy) * wo + ox] = acc;
                }
            }
        }
        let _ = cin;
        out
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[1, 5, 7], &mut rng);
        let k = Tensor::full(&[1, 1, 1, 1], 1.0);
        assert_eq!(conv2d(&x, &k, ConvSpec::default()).unwrap(), x);
    }

    #[test]
    fn ones_kernel_center_sum() {
        let x = Tensor::new(vec![1, 3, 3], (1..=9).map(|v| v as f64).collect()).unwrap();
        let k = Tensor::full(&[1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &k, ConvSpec::default()).unwrap();
        assert_eq!(y.data()[4], 45.0);
        // corner: 1+2+4+5
        assert_eq!(y.data()[0], 12.0);
    }

    #[test]
    fn unit_sum_kernel_preserves_constant_with_symmetric_padding() {
        let x = Tensor::full(&[2, 6, 5], 0.3f64);
        let k = Tensor::full(&[2, 1, 3, 3], 1.0 / 9.0);
        let y = conv2d(&x, &k, ConvSpec::new(Padding::Symmetric).depthwise()).unwrap();
        for v in y.data() {
            assert!((v - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn fold_index_modes() {
        assert_eq!(fold_index(-1, 4, Padding::Symmetric), Some(0));
        assert_eq!(fold_index(-2, 4, Padding::Symmetric), Some(1));
        assert_eq!(fold_index(4, 4, Padding::Symmetric), Some(3));
        assert_eq!(fold_index(-1, 4, Padding::Reflect), Some(1));
        assert_eq!(fold_index(4, 4, Padding::Reflect), Some(2));
        assert_eq!(fold_index(-1, 4, Padding::Zero), None);
        // folding repeats for pads wider than the image
        assert_eq!(fold_index(-9, 4, Padding::Symmetric), Some(0));
        assert_eq!(fold_index(-6, 4, Padding::Symmetric), Some(2));
    }

    #[test]
    fn matches_naive_for_all_modes_and_strides() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for padding in [Padding::Zero, Padding::Reflect, Padding::Symmetric] {
            for stride in [1, 2, 3] {
                for (depthwise, ks) in [(false, 3), (true, 5), (false, 1)] {
                    let x = random(&[3, 7, 6], &mut rng);
                    let kshape = if depthwise { [3, 1, ks, ks] } else { [2, 3, ks, ks] };
                    let k = random(&kshape, &mut rng);
                    let mut spec = ConvSpec::new(padding).stride(stride);
                    spec.depthwise = depthwise;
                    let fast = conv2d(&x, &k, spec).unwrap();
                    let slow = naive(&x, &k, spec);
                    assert_eq!(fast.shape(), slow.shape());
                    for (a, b) in fast.data().iter().zip(slow.data()) {
                        assert!((a - b).abs() < 1e-12, "{padding:?} s={stride}");
                    }
                }
            }
        }
    }

    #[test]
    fn transpose_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for padding in [Padding::Zero, Padding::Reflect, Padding::Symmetric] {
            for stride in [1, 2] {
                let x = random(&[2, 8, 6], &mut rng);
                let k = random(&[3, 2, 3, 3], &mut rng);
                let spec = ConvSpec::new(padding).stride(stride);
                let y = random(&[3, 8 / stride, 6 / stride], &mut rng);
                let lhs = conv2d(&x, &k, spec).unwrap().dot(&y).unwrap();
                let rhs = x.dot(&conv2d_transpose(&y, &k, x.shape(), spec).unwrap()).unwrap();
                assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
            }
        }
    }

    #[test]
    fn kernel_grad_matches_linearity_in_kernel() {
        // <conv(x, K), y> is linear in K, so its gradient dotted with K is the value itself.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&[2, 5, 5], &mut rng);
        let k = random(&[3, 2, 3, 3], &mut rng);
        let spec = ConvSpec::new(Padding::Symmetric).stride(2);
        let y = random(&[3, 3, 3], &mut rng);
        let value = conv2d(&x, &k, spec).unwrap().dot(&y).unwrap();
        let gk = conv2d_kernel_grad(&x, &y, k.shape(), spec).unwrap();
        assert!((gk.dot(&k).unwrap() - value).abs() < 1e-12);
    }

    #[test]
    fn rejects_even_kernels_and_bad_depthwise() {
        let x = Tensor::<f32>::zeros(&[2, 4, 4]);
        assert!(conv2d(&x, &Tensor::zeros(&[1, 2, 2, 2]), ConvSpec::default()).is_err());
        assert!(conv2d(&x, &Tensor::zeros(&[1, 3, 3, 3]), ConvSpec::default()).is_err());
        assert!(conv2d(&x, &Tensor::zeros(&[3, 1, 3, 3]), ConvSpec::default().depthwise()).is_err());
    }
}
