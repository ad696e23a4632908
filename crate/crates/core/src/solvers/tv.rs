//! Isotropic total variation and its proximal operator.

use crate::geometry::Image;

/// Inner iterations of the dual projection in [`tv_prox`].
pub const TV_PROX_ITERS: usize = 30;
/// Dual step of the projection iteration.
pub const TV_DUAL_STEP: f64 = 0.248;

/// Forward differences `(dx, dy)` with a zero difference past the last
/// column / row (replicate boundary).
fn gradient(x: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; n * n];
    let mut dy = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            if j + 1 < n {
                dx[k] = x[k + 1] - x[k];
            }
            if i + 1 < n {
                dy[k] = x[k + n] - x[k];
            }
        }
    }
    (dx, dy)
}

/// Negative adjoint of [`gradient`].
fn divergence(px: &[f64], py: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            let mut v = 0.0;
            if j + 1 < n {
                v += px[k];
            }
            if j > 0 {
                v -= px[k - 1];
            }
            if i + 1 < n {
                v += py[k];
            }
            if i > 0 {
                v -= py[k - n];
            }
            out[k] = v;
        }
    }
    out
}

/// `τ · Σ √(dx² + dy²)`
pub fn tv_value(x: &Image, tau: f64) -> f64 {
    let (dx, dy) = gradient(x.pixels(), x.side());
    tau * dx.iter().zip(&dy).map(|(a, b)| (a * a + b * b).sqrt()).sum::<f64>()
}

/// Approximate `argmin_z ½‖z − x‖² + μ·TV(z)` by Chambolle's dual
/// projection, with a fixed number of inner iterations from a zero dual.
pub fn tv_prox(x: &Image, mu: f64) -> Image {
    assert!(mu > 0.0, "tv_prox needs mu > 0");
    let n = x.side();
    let g = x.pixels();
    let mut px = vec![0.0; n * n];
    let mut py = vec![0.0; n * n];
    let inv_mu = 1.0 / mu;
    for _ in 0..TV_PROX_ITERS {
        let div = divergence(&px, &py, n);
        let d: Vec<f64> = div.iter().zip(g).map(|(dv, gv)| dv - gv * inv_mu).collect();
        let (gx, gy) = gradient(&d, n);
        for k in 0..n * n {
            let norm = (gx[k] * gx[k] + gy[k] * gy[k]).sqrt();
            let denom = 1.0 + TV_DUAL_STEP * norm;
            px[k] = (px[k] + TV_DUAL_STEP * gx[k]) / denom;
            py[k] = (py[k] + TV_DUAL_STEP * gy[k]) / denom;
        }
    }
    let div = divergence(&px, &py, n);
    x.with_pixels(g.iter().zip(&div).map(|(gv, dv)| gv - mu * dv).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_zero_tv_and_is_a_prox_fixed_point() {
        let x = Image::new(5, vec![0.7; 25]).unwrap();
        assert_eq!(tv_value(&x, 3.0), 0.0);
        let z = tv_prox(&x, 0.4);
        for (a, b) in z.pixels().iter().zip(x.pixels()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_weight() {
        let x = Image::new(2, vec![0.0, 5.0, -1.0, 2.0]).unwrap();
        assert_eq!(tv_value(&x, 0.0), 0.0);
    }

    #[test]
    fn two_by_two_enumeration() {
        // pixel (0,0): dx=1, dy=0; (0,1): boundary; (1,0): dx=1; (1,1): boundary
        let x = Image::new(2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let by_hand = [1.0f64, 0.0, 1.0, 0.0].iter().sum::<f64>();
        assert_eq!(tv_value(&x, 1.0), by_hand);
    }

    #[test]
    fn tiny_mu_is_nearly_identity() {
        let x = Image::new(4, (0..16).map(|i| ((i * 7) % 5) as f64).collect()).unwrap();
        let z = tv_prox(&x, 1e-12);
        for (a, b) in z.pixels().iter().zip(x.pixels()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn divergence_is_negative_adjoint_of_gradient() {
        let n = 6;
        let x: Vec<f64> = (0..n * n).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let px: Vec<f64> = (0..n * n).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let py: Vec<f64> = (0..n * n).map(|i| ((i * 17) % 5) as f64 - 2.0).collect();
        let (gx, gy) = gradient(&x, n);
        let lhs: f64 = gx.iter().zip(&px).chain(gy.iter().zip(&py)).map(|(a, b)| a * b).sum();
        let rhs: f64 = -divergence(&px, &py, n).iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        assert_eq!(lhs, rhs);
    }
}
