//! Synthetic ground-truth images.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `(intensity, semi-axis a, semi-axis b, centre x, centre y, rotation°)` of
/// the modified (high-contrast) Shepp-Logan phantom on `[-1,1]²`.
pub const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
];

/// Centre of pixel `(row, col)` in `[-1,1]²`, `y` pointing up.
pub fn pixel_center(row: usize, col: usize, n: usize) -> (f64, f64) {
    let x = (2.0 * col as f64 + 1.0 - n as f64) / n as f64;
    let y = (n as f64 - 1.0 - 2.0 * row as f64) / n as f64;
    (x, y)
}

fn inside(x: f64, y: f64, (_, a, b, x0, y0, phi): (f64, f64, f64, f64, f64, f64)) -> bool {
    let (s, c) = phi.to_radians().sin_cos();
    let (dx, dy) = (x - x0, y - y0);
    let u = dx * c + dy * s;
    let v = -dx * s + dy * c;
    (u / a).powi(2) + (v / b).powi(2) <= 1.0
}

/// `n × n` Shepp-Logan phantom sampled at pixel centres, clipped to `[0,1]`.
pub fn shepp_logan(n: usize) -> Result<Tensor<f32>> {
    if n < 16 {
        return Err(Error::invalid(format!("phantom side must be at least 16, got {n}")));
    }
    Ok(Tensor::from_fn(&[1, n, n], |i| {
        let (x, y) = pixel_center(i / n, i % n, n);
        let v: f64 = SHEPP_LOGAN.iter().filter(|e| inside(x, y, **e)).map(|e| e.0).sum();
        v.clamp(0.0, 1.0) as f32
    }))
}

/// Piecewise-smooth test scene: a shaded background, a bright disc, a dark
/// rectangle and a soft blob. Channels get slightly different intensities.
pub fn synthetic_image(n: usize, channels: usize) -> Result<Tensor<f32>> {
    if n < 8 || channels == 0 {
        return Err(Error::invalid(format!("synthetic image needs n >= 8 and channels > 0, got {n}, {channels}")));
    }
    Ok(Tensor::from_fn(&[channels, n, n], |i| {
        let ch = i / (n * n);
        let (x, y) = pixel_center((i / n) % n, i % n, n);
        let tint = 0.08 * ch as f64;
        let mut v = 0.25 + 0.15 * x + 0.1 * y + tint;
        if (x + 0.3).powi(2) + (y - 0.25).powi(2) < 0.16 {
            v = 0.85 - tint;
        }
        if (0.15..0.7).contains(&x) && (-0.7..-0.1).contains(&y) {
            v = 0.1 + 0.5 * tint;
        }
        v += 0.3 * (-((x - 0.45).powi(2) + (y - 0.5).powi(2)) / 0.02).exp();
        v.clamp(0.0, 1.0) as f32
    }))
}
