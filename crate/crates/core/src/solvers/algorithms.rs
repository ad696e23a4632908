use super::tv::{tv_prox, tv_value};
use super::{BlendedOperator, DataFidelity, SolverConfig};
use crate::denoise::denoise;
use crate::error::{CoilError, Result};
use crate::geometry::Image;
use crate::tomo::l2_norm;

/// Divergence threshold relative to the starting value.
const BLOW_UP: f64 = 1e3;

/// `q⁺ = ½(1 + √(1 + 4q²))` and the extrapolation weight `(q⁺ − 1)/q⁺`.
pub fn momentum_update(q: f64) -> (f64, f64) {
    let next = 0.5 * (1.0 + (1.0 + 4.0 * q * q).sqrt());
    (next, (next - 1.0) / next)
}

fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    let diff: f64 = new.iter().zip(old).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let base = l2_norm(old);
    if base == 0.0 {
        if diff == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        diff / base
    }
}

fn blew_up(value: f64, start: f64) -> bool {
    !value.is_finite() || value > BLOW_UP * start.max(f64::MIN_POSITIVE)
}

/// `s − γ·∇(s)`
fn gradient_step(op: &BlendedOperator, s: &[f64], step: f64) -> Vec<f64> {
    op.gradient(s).iter().zip(s).map(|(g, v)| v - step * g).collect()
}

fn extrapolate(x_new: &[f64], x_old: &[f64], beta: f64) -> Vec<f64> {
    x_new.iter().zip(x_old).map(|(a, b)| a + beta * (a - b)).collect()
}

/// FISTA on `data + τ·TV` with the TV proximal step.
///
/// The returned history holds the objective at `x0` followed by the
/// objective after every iteration.
pub fn fista_tv(fidelity: &DataFidelity, config: &SolverConfig, x0: &Image) -> Result<(Image, Vec<f64>)> {
    config.validate()?;
    let op = BlendedOperator::for_image(fidelity, x0)?;
    op.check(x0.pixels())?;
    let step = config.step_size;
    let tau = config.tv_weight;
    let objective = |x: &Image| op.value(x.pixels()) + tv_value(x, tau);

    let mut x = x0.clone();
    let mut s = x0.pixels().to_vec();
    let mut q = 1.0;
    let start = objective(&x);
    let mut history = vec![start];
    for iteration in 0..config.max_iters {
        let z = x.with_pixels(gradient_step(&op, &s, step));
        let x_new = if tau > 0.0 { tv_prox(&z, step * tau) } else { z };
        let (q_next, beta) = momentum_update(q);
        s = extrapolate(x_new.pixels(), x.pixels(), beta);
        let change = relative_change(x_new.pixels(), x.pixels());
        x = x_new;
        q = q_next;
        let f = objective(&x);
        history.push(f);
        if blew_up(f, start) {
            return Err(CoilError::SolverDiverged { method: "fista_tv", iteration, step_size: step });
        }
        if change < config.stop_tol {
            break;
        }
    }
    Ok((x, history))
}

/// Gradient-method RED:
/// `x⁺ = x − γ[(1−α)∇g(x) + α∇g̃(x) + τ(x − D_σ(x))]`.
///
/// The history holds the norm of the bracketed direction at every iterate.
pub fn gm_red(fidelity: &DataFidelity, config: &SolverConfig, x0: &Image) -> Result<(Image, Vec<f64>)> {
    config.validate()?;
    let op = BlendedOperator::for_image(fidelity, x0)?;
    op.check(x0.pixels())?;
    let step = config.step_size;
    let tau = config.red_weight;

    let mut x = x0.clone();
    let mut history = Vec::new();
    for iteration in 0..config.max_iters {
        let denoised = denoise(&config.denoiser, &x);
        let direction: Vec<f64> = op
            .gradient(x.pixels())
            .iter()
            .zip(x.pixels().iter().zip(denoised.pixels()))
            .map(|(g, (v, d))| g + tau * (v - d))
            .collect();
        let residual = l2_norm(&direction);
        history.push(residual);
        if blew_up(residual, history[0]) {
            return Err(CoilError::SolverDiverged { method: "gm_red", iteration, step_size: step });
        }
        let next: Vec<f64> = x.pixels().iter().zip(&direction).map(|(v, d)| v - step * d).collect();
        let change = relative_change(&next, x.pixels());
        x = x.with_pixels(next);
        if change < config.stop_tol {
            break;
        }
    }
    Ok((x, history))
}

/// PnP-FISTA:
/// `x⁺ = D_σ(s − γ[(1−α)∇g(s) + α∇g̃(s)])`, `s⁺ = x⁺ + ((q⁺−1)/q⁺)(x⁺ − x)`.
pub fn pnp_fista(fidelity: &DataFidelity, config: &SolverConfig, x0: &Image) -> Result<Image> {
    config.validate()?;
    let op = BlendedOperator::for_image(fidelity, x0)?;
    op.check(x0.pixels())?;
    let step = config.step_size;

    let mut x = x0.clone();
    let mut s = x0.pixels().to_vec();
    let mut q = 1.0;
    let start = op.value(x0.pixels());
    for iteration in 0..config.max_iters {
        let z = x.with_pixels(gradient_step(&op, &s, step));
        let x_new = denoise(&config.denoiser, &z);
        let (q_next, beta) = momentum_update(q);
        s = extrapolate(x_new.pixels(), x.pixels(), beta);
        let change = relative_change(x_new.pixels(), x.pixels());
        x = x_new;
        q = q_next;
        if x.pixels().iter().any(|v| !v.is_finite()) || blew_up(op.value(x.pixels()), start) {
            return Err(CoilError::SolverDiverged { method: "pnp_fista", iteration, step_size: step });
        }
        if change < config.stop_tol {
            break;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_ratio_from_one() {
        let (q, beta) = momentum_update(1.0);
        assert!((q - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!((q - 1.618034).abs() < 1e-6);
        assert!((beta - 0.381966).abs() < 1e-6);
        assert!((beta - (q - 1.0) / q).abs() < 1e-15);
    }

    #[test]
    fn relative_change_from_zero() {
        assert_eq!(relative_change(&[0.0], &[0.0]), 0.0);
        assert_eq!(relative_change(&[1.0], &[0.0]), f64::INFINITY);
    }
}
