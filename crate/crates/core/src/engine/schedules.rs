use crate::error::{Error, Result};

/// Coupling weights `β_t`, `t = 0..T`, linear from `beta_lo` at the final
/// state (`t = 0`) up to `beta_hi` at `t = T−1`.
pub fn beta_schedule(steps: usize, beta_hi: f64, beta_lo: f64) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::invalid("trajectory needs at least one step"));
    }
    if !(beta_lo > 0.0 && beta_hi >= beta_lo) {
        return Err(Error::invalid(format!("coupling schedule needs beta_hi >= beta_lo > 0, got {beta_hi}, {beta_lo}")));
    }
    if steps == 1 {
        return Ok(vec![beta_hi]);
    }
    Ok((0..steps).map(|t| lerp(beta_lo, beta_hi, t, steps)).collect())
}

/// Perturbation levels `σ_t = η·√b_t` over the DDPM-style variance ladder
/// `b_t` running linearly from `beta_start` (t = 0) to `beta_end` (t = T−1).
pub fn sigma_schedule(steps: usize, beta_start: f64, beta_end: f64, eta: f64) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::invalid("trajectory needs at least one step"));
    }
    if !(eta >= 0.0) {
        return Err(Error::invalid(format!("perturbation scale must be nonnegative, got {eta}")));
    }
    if !(beta_start >= 0.0 && beta_end >= 0.0) {
        return Err(Error::invalid("variance ladder endpoints must be nonnegative"));
    }
    if steps == 1 {
        return Ok(vec![eta * beta_start.sqrt()]);
    }
    Ok((0..steps).map(|t| eta * lerp(beta_start, beta_end, t, steps).sqrt()).collect())
}

/// Linear interpolation that hits both endpoints exactly.
fn lerp(a: f64, b: f64, t: usize, steps: usize) -> f64 {
    let s = t as f64 / (steps - 1) as f64;
    a * (1.0 - s) + b * s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_endpoints_and_midpoint() {
        let b = beta_schedule(40, 5e-3, 5e-4).unwrap();
        assert_eq!(b.len(), 40);
        assert!((b[39] - 5e-3).abs() < 1e-18);
        assert!((b[0] - 5e-4).abs() < 1e-18);
        assert!((b[20] - (5e-4 + 4.5e-3 * 20.0 / 39.0)).abs() < 1e-15);
        assert!((b[20] - 2.8077e-3).abs() < 1e-7);
        assert_eq!(beta_schedule(2, 5e-3, 5e-4).unwrap(), vec![5e-4, 5e-3]);
        assert_eq!(beta_schedule(1, 5e-3, 5e-4).unwrap(), vec![5e-3]);
    }

    #[test]
    fn beta_rejects_nonpositive() {
        assert!(beta_schedule(4, 0.0, 0.0).is_err());
        assert!(beta_schedule(4, 1e-3, -1e-3).is_err());
        assert!(beta_schedule(4, 1e-4, 1e-3).is_err());
        assert!(beta_schedule(0, 1e-3, 1e-4).is_err());
    }

    #[test]
    fn sigma_ladder() {
        let s = sigma_schedule(40, 1e-4, 1e-2, 1.0).unwrap();
        assert!((s[0] - 0.01).abs() < 1e-15);
        assert!((s[39] - 0.1).abs() < 1e-15);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert!(sigma_schedule(10, 1e-4, 1e-2, 0.0).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(sigma_schedule(1, 1e-4, 1e-2, 2.0).unwrap(), vec![2.0 * 1e-2]);
        assert!(sigma_schedule(5, 1e-4, 1e-2, -1.0).is_err());
    }
}
