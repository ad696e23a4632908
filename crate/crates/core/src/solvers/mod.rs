//! Iterative reconstruction with a blended data-fidelity term
//!
//! `(1−α)·½‖Ax − y‖² + α·½‖Ãx − ỹ‖²`
//!
//! where `y` are the real measurements on geometry `A` and `ỹ` is a field
//! synthesised on geometry `Ã`.

mod algorithms;
mod tv;

pub use algorithms::{fista_tv, gm_red, momentum_update, pnp_fista};
pub use tv::{tv_prox, tv_value, TV_DUAL_STEP, TV_PROX_ITERS};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::denoise::DenoiserSpec;
use crate::error::{invalid, Result};
use crate::geometry::Image;
use crate::tomo::{l2_norm, RadonOperator, Sinogram};

#[derive(Debug, Clone, PartialEq)]
pub struct DataFidelity {
    pub measured: Sinogram,
    pub coil: Option<Sinogram>,
    pub alpha: f64,
}

impl DataFidelity {
    /// Real measurements only.
    pub fn measured(measured: Sinogram) -> Self {
        Self { measured, coil: None, alpha: 0.0 }
    }

    pub fn blended(measured: Sinogram, coil: Sinogram, alpha: f64) -> Result<Self> {
        let f = Self { measured, coil: Some(coil), alpha };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        match &self.coil {
            None if self.alpha != 0.0 => Err(invalid("alpha must be 0 without a synthesised field")),
            Some(c) if c.geometry().num_detectors() != self.measured.geometry().num_detectors() => {
                Err(invalid("synthesised field must share the measured detector grid"))
            }
            _ => Ok(()),
        }
    }
}

/// The fidelity bound to an image grid. Terms with zero weight are never
/// evaluated, so `α = 0` and `α = 1` reproduce the single-term gradients
/// exactly.
pub(crate) struct BlendedOperator<'a> {
    side: usize,
    real: Option<(RadonOperator, &'a [f64], f64)>,
    synth: Option<(RadonOperator, &'a [f64], f64)>,
}

impl<'a> BlendedOperator<'a> {
    pub(crate) fn new(fidelity: &'a DataFidelity, side: usize, pixel_size: f64) -> Result<Self> {
        fidelity.validate()?;
        if side == 0 {
            return Err(invalid("image side must be positive"));
        }
        let alpha = fidelity.alpha;
        let real = (alpha < 1.0).then(|| {
            let m = &fidelity.measured;
            (RadonOperator::new(m.geometry(), side, pixel_size), m.responses(), 1.0 - alpha)
        });
        let synth = match (&fidelity.coil, alpha > 0.0) {
            (Some(c), true) => Some((RadonOperator::new(c.geometry(), side, pixel_size), c.responses(), alpha)),
            _ => None,
        };
        Ok(Self { side, real, synth })
    }

    pub(crate) fn for_image(fidelity: &'a DataFidelity, x: &Image) -> Result<Self> {
        Self::new(fidelity, x.side(), x.pixel_size())
    }

    fn terms(&self) -> impl Iterator<Item = &(RadonOperator, &'a [f64], f64)> {
        self.real.iter().chain(self.synth.iter())
    }

    pub(crate) fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.side * self.side {
            return Err(invalid(format!("image has {} pixels, operator expects {}", x.len(), self.side * self.side)));
        }
        Ok(())
    }

    /// `(1−α)·½‖Ax − y‖² + α·½‖Ãx − ỹ‖²`
    pub(crate) fn value(&self, x: &[f64]) -> f64 {
        self.terms()
            .map(|(op, y, w)| {
                let r: f64 = op.forward(x).iter().zip(*y).map(|(a, b)| (a - b).powi(2)).sum();
                w * 0.5 * r
            })
            .sum()
    }

    pub(crate) fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (op, y, w) in self.terms() {
            let resid: Vec<f64> = op.forward(x).iter().zip(*y).map(|(a, b)| a - b).collect();
            for (o, g) in out.iter_mut().zip(op.adjoint(&resid)) {
                *o += w * g;
            }
        }
        out
    }

    /// `(1−α)AᵀA x + αÃᵀÃ x`
    pub(crate) fn normal(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (op, _, w) in self.terms() {
            for (o, g) in out.iter_mut().zip(op.normal(x)) {
                *o += w * g;
            }
        }
        out
    }
}

/// `(1−α)·Aᵀ(Ax − y) + α·Ãᵀ(Ãx − ỹ)`
pub fn grad_data(fidelity: &DataFidelity, x: &Image) -> Result<Image> {
    let op = BlendedOperator::for_image(fidelity, x)?;
    Ok(x.with_pixels(op.gradient(x.pixels())))
}

/// `(1−α)·½‖Ax − y‖² + α·½‖Ãx − ỹ‖²`
pub fn data_value(fidelity: &DataFidelity, x: &Image) -> Result<f64> {
    let op = BlendedOperator::for_image(fidelity, x)?;
    Ok(op.value(x.pixels()))
}

/// Seed of the power-iteration start vector.
pub const POWER_ITERATION_SEED: u64 = 0x5eed;

/// Largest eigenvalue of `(1−α)AᵀA + αÃᵀÃ` on a `side × side` grid, by
/// power iteration from a seeded random start. Returns the Rayleigh
/// quotient of the last iterate, which never decreases with `iters`.
pub fn power_iteration(fidelity: &DataFidelity, side: usize, iters: usize) -> Result<f64> {
    if iters < 10 {
        return Err(invalid("power iteration needs at least 10 iterations"));
    }
    let op = BlendedOperator::new(fidelity, side, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_ITERATION_SEED);
    let mut x: Vec<f64> = (0..side * side).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = l2_norm(&x);
    x.iter_mut().for_each(|v| *v /= norm);
    let mut estimate = 0.0;
    for _ in 0..iters {
        let y = op.normal(&x);
        estimate = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let norm = l2_norm(&y);
        if norm == 0.0 {
            return Ok(0.0);
        }
        x = y.into_iter().map(|v| v / norm).collect();
    }
    Ok(estimate)
}

/// Safety factor applied to `1 / L` when choosing a step size.
pub const STEP_SAFETY: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algorithm {
    #[default]
    FistaTv,
    GmRed,
    PnpFista,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::FistaTv => "fista_tv",
            Self::GmRed => "gm_red",
            Self::PnpFista => "pnp_fista",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = crate::CoilError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fista_tv" => Ok(Self::FistaTv),
            "gm_red" => Ok(Self::GmRed),
            "pnp_fista" => Ok(Self::PnpFista),
            other => Err(invalid(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub step_size: f64,
    pub tv_weight: f64,
    pub red_weight: f64,
    pub denoiser: DenoiserSpec,
    pub max_iters: usize,
    /// Stop once `‖x⁺ − x‖ / ‖x‖` falls below this.
    pub stop_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::FistaTv,
            step_size: 1e-3,
            tv_weight: 0.0,
            red_weight: 0.0,
            denoiser: DenoiserSpec::identity(),
            max_iters: 200,
            stop_tol: 1e-6,
        }
    }
}

impl SolverConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(invalid("step size must be positive"));
        }
        if !(self.tv_weight >= 0.0 && self.red_weight >= 0.0 && self.stop_tol >= 0.0) {
            return Err(invalid("weights and tolerance must be nonnegative"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be positive"));
        }
        Ok(())
    }
}
