//! PSNR, SSIM and trajectory-transition diagnostics.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Side of the uniform SSIM window.
pub const SSIM_WINDOW: usize = 7;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Peak-signal-to-noise ratio for unit peak. Identical images give
/// `f64::INFINITY`.
pub fn psnr(x: &Tensor<f32>, reference: &Tensor<f32>) -> Result<f64> {
    x.expect_same_shape(reference, "psnr")?;
    let mse = x.distance(reference)?.powi(2) / x.numel() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

fn planes(t: &Tensor<f32>) -> Result<(usize, usize, usize)> {
    match t.shape() {
        [h, w] => Ok((1, *h, *w)),
        [c, h, w] => Ok((*c, *h, *w)),
        s => Err(Error::shape("ssim", "[H,W] or [C,H,W]", format!("{s:?}"))),
    }
}

/// Mean SSIM over all valid 7×7 windows (uniform weights, population
/// moments, dynamic range 1), averaged over channels.
pub fn ssim(x: &Tensor<f32>, reference: &Tensor<f32>) -> Result<f64> {
    x.expect_same_shape(reference, "ssim")?;
    let (c, h, w) = planes(x)?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}")));
    }
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let (a, b) = (x.data(), reference.data());
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..c {
        let base = ch * h * w;
        for top in 0..=h - SSIM_WINDOW {
            for left in 0..=w - SSIM_WINDOW {
                let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for r in top..top + SSIM_WINDOW {
                    for col in left..left + SSIM_WINDOW {
                        let p = a[base + r * w + col] as f64;
                        let q = b[base + r * w + col] as f64;
                        sx += p;
                        sy += q;
                        sxx += p * p;
                        syy += q * q;
                        sxy += p * q;
                    }
                }
                let (mx, my) = (sx / n, sy / n);
                let vx = (sxx / n - mx * mx).max(0.0);
                let vy = (syy / n - my * my).max(0.0);
                let cov = sxy / n - mx * my;
                total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// `Δ_t = ‖x_t − x_{t+1}‖₂` and `β_t·Δ_t` for states ordered `x_T, …, x_0`
/// and couplings ordered `β_{T−1}, …, β_0`.
pub fn delta_series(states: &[Tensor<f32>], betas: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if states.len() < 2 {
        return Err(Error::invalid(format!("need at least two states, got {}", states.len())));
    }
    if betas.len() != states.len() - 1 {
        return Err(Error::shape("delta_series", format!("{} couplings", states.len() - 1), betas.len().to_string()));
    }
    let deltas = states.windows(2).map(|pair| pair[1].distance(&pair[0])).collect::<Result<Vec<_>>>()?;
    let weighted = deltas.iter().zip(betas).map(|(d, b)| d * b).collect();
    Ok((deltas, weighted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.random_range(0.0..1.0))
    }

    #[test]
    fn psnr_extremes() {
        let x = random(&[1, 8, 8], 0);
        assert_eq!(psnr(&x, &x).unwrap(), f64::INFINITY);
        let zeros = Tensor::zeros(&[1, 8, 8]);
        let ones = Tensor::full(&[1, 8, 8], 1.0);
        assert_eq!(psnr(&zeros, &ones).unwrap(), 0.0);
    }

    #[test]
    fn psnr_matches_direct_mse() {
        let (x, r) = (random(&[3, 9, 7], 1), random(&[3, 9, 7], 2));
        let mse: f64 = x
            .data()
            .iter()
            .zip(r.data())
            .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
            .sum::<f64>()
            / x.numel() as f64;
        assert!((psnr(&x, &r).unwrap() - (-10.0 * mse.log10())).abs() < 1e-9);
    }

    #[test]
    fn psnr_decreases_with_perturbation() {
        let r = random(&[1, 16, 16], 3);
        let noise = random(&[1, 16, 16], 4).map(|v| v - 0.5);
        let scores: Vec<f64> = [0.01f32, 0.05, 0.2]
            .iter()
            .map(|&m| psnr(&r.zip_map(&noise, |a, n| a + m * n).unwrap(), &r).unwrap())
            .collect();
        assert!(scores[0] > scores[1] && scores[1] > scores[2]);
    }

    #[test]
    fn ssim_identity_and_constant_shift() {
        let x = random(&[1, 12, 12], 5);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-9);

        let r = Tensor::full(&[1, 10, 10], 0.5f32);
        let shifted = r.map(|v| v + 0.1);
        let (mx, my) = (0.6f32 as f64, 0.5f64);
        let c1 = 0.01f64.powi(2);
        // zero variances: the contrast-structure factor is c2/c2 = 1
        let expected = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
        assert!((ssim(&shifted, &r).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn ssim_of_inverted_pattern_is_negative() {
        let r = Tensor::from_fn(&[1, 14, 14], |i| if (i / 14 + i % 14) % 2 == 0 { 1.0 } else { 0.0 });
        let inv = r.map(|v| 1.0 - v);
        assert!(ssim(&inv, &r).unwrap() < 0.0);
    }

    #[test]
    fn metrics_are_symmetric() {
        let (x, r) = (random(&[2, 10, 10], 6), random(&[2, 10, 10], 7));
        assert_eq!(psnr(&x, &r).unwrap(), psnr(&r, &x).unwrap());
        assert!((ssim(&x, &r).unwrap() - ssim(&r, &x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let x = Tensor::zeros(&[1, 6, 10]);
        assert!(ssim(&x, &x).is_err());
    }

    #[test]
    fn delta_series_basics() {
        let e1 = Tensor::new(vec![2], vec![1.0f32, 0.0]).unwrap();
        let e2 = Tensor::new(vec![2], vec![0.0f32, 1.0]).unwrap();
        let (d, bd) = delta_series(&[e1.clone(), e2, e1.clone(), e1], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d.len(), 3);
        assert!((d[0] - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(d[2], 0.0);
        assert!((bd[1] - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!(delta_series(&[Tensor::<f32>::zeros(&[1])], &[]).is_err());
    }
}
