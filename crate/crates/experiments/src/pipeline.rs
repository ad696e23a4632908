//! In-memory stages shared by the subcommands: simulate, train, synthesise
//! and reconstruct.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use coil::denoise::DenoiserSpec;
use coil::field::{query_field, samples_of, train_field, FfmConfig, TrainedField};
use coil::io::{read_array, write_array, write_image_pgm};
use coil::solvers::{fista_tv, gm_red, pnp_fista, power_iteration, Algorithm, DataFidelity, SolverConfig, STEP_SAFETY};
use coil::tomo::{combine_views, fbp_weighted};
use coil::*;

use crate::config::{ExperimentConfig, Init, Method, MethodSpec};

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Seed for one purpose within one `(P, I)` cell.
pub fn cell_seed(seed: u64, purpose: &str, views: usize, snr_db: f64) -> u64 {
    let mut bytes = seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(purpose.as_bytes());
    bytes.extend_from_slice(&(views as u64).to_le_bytes());
    bytes.extend_from_slice(&snr_db.to_bits().to_le_bytes());
    fnv1a(&bytes)
}

/// Phantom, noiseless and noisy sinograms of one cell.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub phantom: Image,
    pub clean: Sinogram,
    pub noisy: Sinogram,
}

pub fn simulate(cfg: &ExperimentConfig, views: usize, snr_db: f64) -> Result<Scenario> {
    let phantom = make_shepp_logan(cfg.phantom_side)?;
    let geometry = make_geometry(views, cfg.phantom_side, AngleSpan::HalfCircle)?;
    let clean = radon_forward(&phantom, &geometry);
    let noise = NoiseSpec { input_snr_db: snr_db, seed: cell_seed(cfg.seed, "noise", views, snr_db) };
    let noisy = add_noise(&clean, noise)?;
    Ok(Scenario { phantom, clean, noisy })
}

pub fn field_geometry(cfg: &ExperimentConfig) -> Result<Geometry> {
    Ok(make_geometry(cfg.field_views, cfg.phantom_side, AngleSpan::HalfCircle)?)
}

pub fn train(cfg: &ExperimentConfig, measured: &Sinogram, ffm: FfmConfig) -> Result<TrainedField> {
    let mlp = cfg.mlp_profile.mlp(ffm.output_dim());
    Ok(train_field(&samples_of(measured), ffm, mlp, &cfg.train)?)
}

/// The field queried on the dense target geometry.
pub fn synthesize(cfg: &ExperimentConfig, field: &coil::field::NeuralField, num_detectors: usize) -> Result<Sinogram> {
    let g = make_geometry(cfg.field_views, num_detectors, AngleSpan::HalfCircle)?;
    Ok(query_field(field, &coordinates_of(&g), &g)?)
}

/// Blending weight actually used for `spec` given whether a field exists.
pub fn effective_alpha(spec: &MethodSpec, has_field: bool) -> f64 {
    if has_field {
        spec.alpha_with_field()
    } else {
        spec.alpha.unwrap_or(0.0)
    }
}

pub fn reconstruct(cfg: &ExperimentConfig, spec: &MethodSpec, measured: &Sinogram, coil: Option<&Sinogram>) -> Result<Image> {
    let side = cfg.phantom_side;
    let algorithm = match spec.method {
        Method::Fbp => return Ok(fbp(measured, side, cfg.fbp_window)?),
        Method::FbpCoil => {
            let synth = coil.ok_or_else(|| anyhow!("fbp_coil needs a trained field"))?;
            let (combined, weights) = combine_views(measured, synth)?;
            return Ok(fbp_weighted(&combined, side, cfg.fbp_window, &weights)?);
        }
        Method::Iterative(a) => a,
    };
    let alpha = effective_alpha(spec, coil.is_some());
    let fidelity = match coil {
        Some(c) => DataFidelity::blended(measured.clone(), c.clone(), alpha)?,
        None if alpha > 0.0 => bail!("{} with alpha {alpha} needs a trained field", algorithm.as_str()),
        None => DataFidelity::measured(measured.clone()),
    };
    let s = &cfg.solver;
    let lipschitz = power_iteration(&fidelity, side, s.power_iters)?;
    // the RED term adds at most red_weight to the Lipschitz constant
    let extra = if algorithm == Algorithm::GmRed { s.red_weight } else { 0.0 };
    let config = SolverConfig {
        algorithm,
        step_size: STEP_SAFETY / (lipschitz + extra),
        tv_weight: s.tv_weight,
        red_weight: s.red_weight,
        denoiser: match algorithm {
            Algorithm::FistaTv => DenoiserSpec::identity(),
            Algorithm::GmRed => s.red_denoiser,
            Algorithm::PnpFista => s.pnp_denoiser,
        },
        max_iters: s.max_iters,
        stop_tol: s.stop_tol,
    };
    let x0 = match s.init {
        Init::Zeros => Image::zeros(side),
        Init::Fbp => fbp(measured, side, cfg.fbp_window)?,
    };
    Ok(match algorithm {
        Algorithm::FistaTv => fista_tv(&fidelity, &config, &x0)?.0,
        Algorithm::GmRed => gm_red(&fidelity, &config, &x0)?.0,
        Algorithm::PnpFista => pnp_fista(&fidelity, &config, &x0)?,
    })
}

pub fn write_sinogram(s: &Sinogram, path: &Path) -> Result<()> {
    let g = s.geometry();
    write_array(s.responses(), &[g.num_views(), g.num_detectors()], path)
        .with_context(|| format!("writing {}", path.display()))
}

/// Sinogram files store `[P, D]`; views are uniform over the half circle.
pub fn read_sinogram(path: &Path) -> Result<Sinogram> {
    let (values, dims) = read_array(path).with_context(|| format!("reading {}", path.display()))?;
    let [p, d] = dims[..] else {
        bail!("{}: expected a 2-D sinogram array, found dims {dims:?}", path.display());
    };
    Ok(Sinogram::new(make_geometry(p, d, AngleSpan::HalfCircle)?, values)?)
}

pub fn write_image(img: &Image, path: &Path) -> Result<()> {
    write_array(img.pixels(), &[img.side(), img.side()], path).with_context(|| format!("writing {}", path.display()))
}

pub fn read_image(path: &Path) -> Result<Image> {
    let (values, dims) = read_array(path).with_context(|| format!("reading {}", path.display()))?;
    match dims[..] {
        [a, b] if a == b => Ok(Image::new(a, values)?),
        _ => bail!("{}: expected a square image array, found dims {dims:?}", path.display()),
    }
}

/// Preview with the phantom's display window.
pub fn write_preview(img: &Image, path: &Path) -> Result<()> {
    write_image_pgm(img, path, Some((0.0, 1.0))).with_context(|| format!("writing {}", path.display()))
}
