//! Parallel-beam Radon transform, its adjoint, filtered backprojection and
//! measurement noise.
//!
//! The projector is ray driven: every ray is sampled at a fixed step of half
//! a pixel and the image is read with bilinear interpolation. The adjoint
//! walks the very same samples and deposits the same weights, so it is the
//! transpose of the forward operator up to summation order.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{invalid, Result};
use crate::geometry::{Geometry, Image};

/// Ray-marching step, in pixels.
pub const RAY_STEP: f64 = 0.5;

/// Measured or synthesised line integrals, view-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    geometry: Geometry,
    responses: Vec<f64>,
}

impl Sinogram {
    pub fn new(geometry: Geometry, responses: Vec<f64>) -> Result<Self> {
        let expected = geometry.num_views() * geometry.num_detectors();
        if responses.len() != expected {
            return Err(invalid(format!(
                "sinogram with {} views x {} detectors needs {expected} responses, got {}",
                geometry.num_views(),
                geometry.num_detectors(),
                responses.len()
            )));
        }
        if responses.iter().any(|r| !r.is_finite()) {
            return Err(invalid("sinogram responses must be finite"));
        }
        Ok(Self { geometry, responses })
    }

    pub fn zeros(geometry: Geometry) -> Self {
        let n = geometry.num_views() * geometry.num_detectors();
        Self { geometry, responses: vec![0.0; n] }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn responses_mut(&mut self) -> &mut [f64] {
        &mut self.responses
    }

    pub fn into_responses(self) -> Vec<f64> {
        self.responses
    }

    pub fn view(&self, view: usize) -> &[f64] {
        let d = self.geometry.num_detectors();
        &self.responses[view * d..(view + 1) * d]
    }
}

impl AsRef<[f64]> for Sinogram {
    fn as_ref(&self) -> &[f64] {
        &self.responses
    }
}

/// The discretised Radon operator for one geometry and image grid.
#[derive(Debug, Clone)]
pub struct RadonOperator {
    geometry: Geometry,
    side: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
    /// Physical detector offsets from the rotation centre, in pixels.
    offsets: Vec<f64>,
    num_steps: usize,
    /// Step length times pixel size: the quadrature weight of one sample.
    sample_weight: f64,
}

impl RadonOperator {
    pub fn new(geometry: &Geometry, side: usize, pixel_size: f64) -> Self {
        assert!(side > 0);
        let span = Geometry::detector_span(side);
        let offsets = geometry.detector_positions().iter().map(|l| (l - 0.5) * span).collect();
        let (sin, cos) = geometry.angles().iter().map(|a| a.sin_cos()).unzip();
        Self {
            geometry: geometry.clone(),
            side,
            cos,
            sin,
            offsets,
            num_steps: (span / RAY_STEP).ceil() as usize,
            sample_weight: RAY_STEP * pixel_size,
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Visit every `(pixel index, weight)` pair of one ray, in a fixed order.
    fn trace(&self, view: usize, det: usize, mut visit: impl FnMut(usize, f64)) {
        let (sin, cos) = (self.sin[view], self.cos[view]);
        let t = self.offsets[det];
        let (bx, by) = (t * cos, t * sin);
        let n = self.side as f64;
        let centre = n / 2.0 - 0.5;
        // A sample can touch the grid only if |x|, |y| < side/2 + 1/2.
        let bound = n / 2.0 + 0.5;
        let mid = (self.num_steps as f64 - 1.0) / 2.0;

        // Parameter range s along direction (-sin, cos) inside the slab.
        let (mut s_lo, mut s_hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for (base, dir) in [(bx, -sin), (by, cos)] {
            if dir.abs() < 1e-12 {
                if base.abs() >= bound {
                    return;
                }
            } else {
                let a = (-bound - base) / dir;
                let b = (bound - base) / dir;
                s_lo = s_lo.max(a.min(b));
                s_hi = s_hi.min(a.max(b));
            }
        }
        if s_lo > s_hi {
            return;
        }
        let k_lo = ((s_lo / RAY_STEP + mid).floor().max(0.0)) as usize;
        let k_hi = ((s_hi / RAY_STEP + mid).ceil().min(self.num_steps as f64 - 1.0)) as usize;

        let side = self.side as isize;
        for k in k_lo..=k_hi {
            let s = (k as f64 - mid) * RAY_STEP;
            let col = bx - s * sin + centre;
            let row = centre - (by + s * cos);
            let c0 = col.floor();
            let r0 = row.floor();
            let fc = col - c0;
            let fr = row - r0;
            let (c0, r0) = (c0 as isize, r0 as isize);
            for (r, wr) in [(r0, 1.0 - fr), (r0 + 1, fr)] {
                if r < 0 || r >= side || wr == 0.0 {
                    continue;
                }
                for (c, wc) in [(c0, 1.0 - fc), (c0 + 1, fc)] {
                    if c < 0 || c >= side || wc == 0.0 {
                        continue;
                    }
                    visit(r as usize * self.side + c as usize, wr * wc * self.sample_weight);
                }
            }
        }
    }

    pub fn forward(&self, pixels: &[f64]) -> Vec<f64> {
        assert_eq!(pixels.len(), self.side * self.side);
        let d = self.geometry.num_detectors();
        let mut out = vec![0.0; self.geometry.num_views() * d];
        for view in 0..self.geometry.num_views() {
            for det in 0..d {
                let mut acc = 0.0;
                self.trace(view, det, |idx, w| acc += w * pixels[idx]);
                out[view * d + det] = acc;
            }
        }
        out
    }

    pub fn adjoint(&self, responses: &[f64]) -> Vec<f64> {
        let d = self.geometry.num_detectors();
        assert_eq!(responses.len(), self.geometry.num_views() * d);
        let mut out = vec![0.0; self.side * self.side];
        for view in 0..self.geometry.num_views() {
            for det in 0..d {
                let r = responses[view * d + det];
                if r == 0.0 {
                    continue;
                }
                self.trace(view, det, |idx, w| out[idx] += w * r);
            }
        }
        out
    }

    /// `Aᵀ(A x)`
    pub fn normal(&self, pixels: &[f64]) -> Vec<f64> {
        self.adjoint(&self.forward(pixels))
    }
}

pub fn radon_forward(image: &Image, geometry: &Geometry) -> Sinogram {
    let op = RadonOperator::new(geometry, image.side(), image.pixel_size());
    Sinogram { geometry: geometry.clone(), responses: op.forward(image.pixels()) }
}

pub fn radon_adjoint(sinogram: &Sinogram, side: usize) -> Result<Image> {
    if side == 0 {
        return Err(invalid("image side must be positive"));
    }
    let op = RadonOperator::new(sinogram.geometry(), side, 1.0);
    Image::new(side, op.adjoint(sinogram.responses()))
}

/// Apodisation applied on top of the ramp filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FbpWindow {
    #[default]
    RamLak,
    Hann,
}

impl std::str::FromStr for FbpWindow {
    type Err = crate::CoilError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ram_lak" => Ok(Self::RamLak),
            "hann" => Ok(Self::Hann),
            other => Err(invalid(format!("unknown FBP window '{other}' (expected ram_lak or hann)"))),
        }
    }
}

/// Frequency response of the band-limited ramp, sampled on an `n`-point
/// DFT grid. Built as the transform of the spatial Ram-Lak kernel, which
/// keeps the DC term consistent with the finite support.
fn ramp_response(n: usize, window: FbpWindow) -> Vec<f64> {
    let mut kernel = vec![Complex64::new(0.0, 0.0); n];
    kernel[0].re = 0.25;
    for k in (1..=n / 2).step_by(2) {
        let v = -1.0 / (PI * k as f64).powi(2);
        kernel[k].re = v;
        kernel[n - k].re = v;
    }
    FftPlanner::new().plan_fft_forward(n).process(&mut kernel);
    kernel
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let freq = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 } / n as f64;
            let w = match window {
                FbpWindow::RamLak => 1.0,
                FbpWindow::Hann => (PI * freq).cos().powi(2),
            };
            h.re * w
        })
        .collect()
}

/// Ramp-filter every view of `responses` (in detector-sample units).
fn ramp_filter(responses: &[f64], num_detectors: usize, window: FbpWindow) -> Vec<f64> {
    let n = (2 * num_detectors).next_power_of_two();
    let response = ramp_response(n, window);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut out = Vec::with_capacity(responses.len());
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for row in responses.chunks(num_detectors) {
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (b, &r) in buf.iter_mut().zip(row) {
            b.re = r;
        }
        fwd.process(&mut buf);
        for (b, h) in buf.iter_mut().zip(&response) {
            *b *= h;
        }
        inv.process(&mut buf);
        out.extend(buf[..num_detectors].iter().map(|c| c.re / n as f64));
    }
    out
}

/// Filtered backprojection on a uniformly sampled half circle.
pub fn fbp(sinogram: &Sinogram, side: usize, window: FbpWindow) -> Result<Image> {
    let p = sinogram.geometry().num_views();
    fbp_weighted(sinogram, side, window, &vec![PI / p as f64; p])
}

/// Filtered backprojection with an explicit angular quadrature weight per
/// view, for stacks whose angles are not evenly spaced.
pub fn fbp_weighted(sinogram: &Sinogram, side: usize, window: FbpWindow, view_weights: &[f64]) -> Result<Image> {
    let geometry = sinogram.geometry();
    if side == 0 {
        return Err(invalid("image side must be positive"));
    }
    if view_weights.len() != geometry.num_views() {
        return Err(invalid("one quadrature weight per view required"));
    }
    let d = geometry.num_detectors();
    let mut filtered = ramp_filter(sinogram.responses(), d, window);
    // Filtered rows in physical units are (kernel * p) / spacing, and the ray
    // adjoint deposits 1/spacing per unit area, so continuous backprojection
    // is spacing · Aᵀ. The two spacing factors cancel.
    for (row, &w) in filtered.chunks_mut(d).zip(view_weights) {
        row.iter_mut().for_each(|v| *v *= w);
    }
    let op = RadonOperator::new(geometry, side, 1.0);
    Image::new(side, op.adjoint(&filtered))
}

/// Interleave real views with synthesised ones. Synthesised views whose
/// angle coincides with a real view are dropped in favour of the real data.
/// Returns the merged stack and the angular quadrature weight of each view.
pub fn combine_views(real: &Sinogram, synthesized: &Sinogram) -> Result<(Sinogram, Vec<f64>)> {
    let d = real.geometry().num_detectors();
    if synthesized.geometry().num_detectors() != d {
        return Err(invalid("combined sinograms must share the detector grid"));
    }
    const SAME_ANGLE: f64 = 1e-9;
    let mut views: Vec<(f64, &[f64])> = real
        .geometry()
        .angles()
        .iter()
        .enumerate()
        .map(|(i, &a)| (a, real.view(i)))
        .collect();
    for (i, &a) in synthesized.geometry().angles().iter().enumerate() {
        if !real.geometry().angles().iter().any(|&r| (r - a).abs() < SAME_ANGLE) {
            views.push((a, synthesized.view(i)));
        }
    }
    views.sort_by(|a, b| a.0.total_cmp(&b.0));
    let angles: Vec<f64> = views.iter().map(|v| v.0).collect();
    let responses: Vec<f64> = views.iter().flat_map(|v| v.1.iter().copied()).collect();
    let weights = angular_weights(&angles);
    let geometry = Geometry::from_angles(angles, d)?;
    Ok((Sinogram::new(geometry, responses)?, weights))
}

/// Half the angular distance between each view's neighbours on the
/// π-periodic circle.
fn angular_weights(angles: &[f64]) -> Vec<f64> {
    let k = angles.len();
    if k == 1 {
        return vec![PI];
    }
    (0..k)
        .map(|i| {
            let prev = if i == 0 { angles[k - 1] - PI } else { angles[i - 1] };
            let next = if i == k - 1 { angles[0] + PI } else { angles[i + 1] };
            (next - prev) / 2.0
        })
        .collect()
}

/// Input SNR in dB and the seed of the noise realisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub input_snr_db: f64,
    pub seed: u64,
}

/// Add white Gaussian noise rescaled so that `20·log₁₀(‖y‖/‖e‖)` is exactly
/// the requested input SNR for this realisation.
pub fn add_noise(sinogram: &Sinogram, noise: NoiseSpec) -> Result<Sinogram> {
    if !noise.input_snr_db.is_finite() {
        return Err(invalid("input SNR must be finite"));
    }
    let signal_norm = l2_norm(sinogram.responses());
    if signal_norm == 0.0 {
        return Err(invalid("cannot add noise at a prescribed SNR to an all-zero sinogram"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let raw: Vec<f64> = (0..sinogram.responses().len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let target = signal_norm / 10f64.powf(noise.input_snr_db / 20.0);
    let scale = target / l2_norm(&raw);
    let responses = sinogram.responses().iter().zip(&raw).map(|(y, e)| y + scale * e).collect();
    Sinogram::new(sinogram.geometry().clone(), responses)
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
