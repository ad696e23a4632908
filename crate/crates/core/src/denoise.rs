//! Denoisers `D_σ` for RED and PnP.

use crate::error::{invalid, Result};
use crate::geometry::Image;
use crate::solvers::tv_prox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DenoiserKind {
    #[default]
    Identity,
    /// Truncated, renormalised Gaussian blur; `sigma` is the kernel width in pixels.
    Gaussian,
    /// TV proximal map; `sigma` is the prox weight.
    Tv,
}

impl std::str::FromStr for DenoiserKind {
    type Err = crate::CoilError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "gaussian" => Ok(Self::Gaussian),
            "tv" => Ok(Self::Tv),
            other => Err(invalid(format!("unknown denoiser '{other}' (expected identity, gaussian or tv)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DenoiserSpec {
    pub kind: DenoiserKind,
    pub sigma: f64,
}

impl DenoiserSpec {
    pub fn new(kind: DenoiserKind, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(invalid("denoiser sigma must be finite and nonnegative"));
        }
        Ok(Self { kind, sigma })
    }

    pub fn identity() -> Self {
        Self { kind: DenoiserKind::Identity, sigma: 0.0 }
    }
}

/// Normalised 1-D Gaussian taps on `[-r, r]`, `r = ⌈3σ⌉`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius).map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

fn gaussian_blur(x: &Image, sigma: f64) -> Image {
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let n = x.side();
    let clamp = |i: isize| i.clamp(0, n as isize - 1) as usize;
    let src = x.pixels();
    let mut rows = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            rows[i * n + j] = kernel
                .iter()
                .enumerate()
                .map(|(t, w)| w * src[i * n + clamp(j as isize + t as isize - r)])
                .sum();
        }
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = kernel
                .iter()
                .enumerate()
                .map(|(t, w)| w * rows[clamp(i as isize + t as isize - r) * n + j])
                .sum();
        }
    }
    x.with_pixels(out)
}

pub fn denoise(spec: &DenoiserSpec, x: &Image) -> Image {
    match spec.kind {
        DenoiserKind::Identity => x.clone(),
        DenoiserKind::Gaussian => gaussian_blur(x, spec.sigma),
        DenoiserKind::Tv if spec.sigma == 0.0 => x.clone(),
        DenoiserKind::Tv => tv_prox(x, spec.sigma),
    }
}
