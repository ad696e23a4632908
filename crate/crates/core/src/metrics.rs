//! Reconstruction and synthesis quality metrics.

use crate::error::{invalid, Result};

/// `20·log₁₀(‖reference‖ / ‖reference − estimate‖)`, in dB. Perfect
/// agreement gives `+∞`.
pub fn snr_db(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(invalid(format!(
            "SNR shape mismatch: estimate has {} values, reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    let signal: f64 = reference.iter().map(|r| r * r).sum::<f64>().sqrt();
    if signal == 0.0 {
        return Err(invalid("SNR is undefined for an all-zero reference"));
    }
    let error: f64 = reference.iter().zip(estimate).map(|(r, e)| (r - e).powi(2)).sum::<f64>().sqrt();
    if error == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (signal / error).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identical_is_infinite() {
        let x = [1.0, -2.0, 3.0];
        assert_eq!(snr_db(&x, &x).unwrap(), f64::INFINITY);
    }

    #[test]
    fn zero_estimate_is_zero_db() {
        assert_eq!(snr_db(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 0.0);
    }

    #[test]
    fn tenth_error_is_twenty_db() {
        let r = [1.0, 2.0, -0.5];
        let e: Vec<f64> = r.iter().map(|v| 0.9 * v).collect();
        assert_relative_eq!(snr_db(&e, &r).unwrap(), 20.0, max_relative = 1e-12);
    }

    #[test]
    fn scale_invariant() {
        let r = [1.0, 2.0, -0.5, 0.25];
        let e = [1.1, 1.9, -0.4, 0.0];
        let base = snr_db(&e, &r).unwrap();
        for k in [-3.0, 1e-3, 7.5] {
            let rs: Vec<f64> = r.iter().map(|v| v * k).collect();
            let es: Vec<f64> = e.iter().map(|v| v * k).collect();
            assert_relative_eq!(snr_db(&es, &rs).unwrap(), base, max_relative = 1e-12);
        }
    }

    #[test]
    fn errors() {
        assert!(snr_db(&[1.0], &[0.0]).is_err());
        assert!(snr_db(&[1.0, 2.0], &[1.0]).is_err());
    }
}
