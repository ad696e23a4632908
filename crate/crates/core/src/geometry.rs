//! Image grids, parallel-beam geometry and analytic phantoms.

use std::f64::consts::PI;

use crate::error::{invalid, Result};

/// Square grayscale image, row-major, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    side: usize,
    pixels: Vec<f64>,
    pixel_size: f64,
}

impl Image {
    pub fn new(side: usize, pixels: Vec<f64>) -> Result<Self> {
        if side == 0 {
            return Err(invalid("image side must be positive"));
        }
        if pixels.len() != side * side {
            return Err(invalid(format!(
                "image of side {side} needs {} pixels, got {}",
                side * side,
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(invalid("image pixels must be finite"));
        }
        Ok(Self { side, pixels, pixel_size: 1.0 })
    }

    pub fn zeros(side: usize) -> Self {
        assert!(side > 0, "image side must be positive");
        Self { side, pixels: vec![0.0; side * side], pixel_size: 1.0 }
    }

    pub fn with_pixel_size(mut self, pixel_size: f64) -> Result<Self> {
        if !(pixel_size > 0.0 && pixel_size.is_finite()) {
            return Err(invalid("pixel size must be positive and finite"));
        }
        self.pixel_size = pixel_size;
        Ok(self)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.side + col]
    }

    /// Same grid, new pixel values. Panics if the length differs.
    pub(crate) fn with_pixels(&self, pixels: Vec<f64>) -> Self {
        assert_eq!(pixels.len(), self.pixels.len());
        Self { side: self.side, pixels, pixel_size: self.pixel_size }
    }
}

impl AsRef<[f64]> for Image {
    fn as_ref(&self) -> &[f64] {
        &self.pixels
    }
}

/// Range of view angles covered by a geometry. Parallel-beam data is
/// redundant beyond a half circle, so that is the only option.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AngleSpan {
    #[default]
    HalfCircle,
}

/// Parallel-beam acquisition geometry.
///
/// Angles are radians in `[0, π)`, strictly increasing. Detector positions
/// are normalised to `[0, 1]` across a detector whose physical span is the
/// diagonal of the image it is applied to, centred on the image.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    angles: Vec<f64>,
    detector_positions: Vec<f64>,
}

impl Geometry {
    /// Geometry with arbitrary (sorted) view angles and `num_detectors`
    /// centre-sampled detectors.
    pub fn from_angles(angles: Vec<f64>, num_detectors: usize) -> Result<Self> {
        if angles.is_empty() {
            return Err(invalid("geometry needs at least one view"));
        }
        if num_detectors < 2 {
            return Err(invalid("geometry needs at least two detectors"));
        }
        if angles.iter().any(|a| !(0.0..PI).contains(a)) {
            return Err(invalid("view angles must lie in [0, pi)"));
        }
        if angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("view angles must be strictly increasing"));
        }
        let d = num_detectors as f64;
        let detector_positions = (0..num_detectors).map(|j| (j as f64 + 0.5) / d).collect();
        Ok(Self { angles, detector_positions })
    }

    pub fn num_views(&self) -> usize {
        self.angles.len()
    }

    pub fn num_detectors(&self) -> usize {
        self.detector_positions.len()
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn detector_positions(&self) -> &[f64] {
        &self.detector_positions
    }

    /// Physical detector span for an image of `side` pixels of unit size:
    /// the image diagonal, so no ray through the support is missed.
    pub fn detector_span(side: usize) -> f64 {
        side as f64 * std::f64::consts::SQRT_2
    }

    /// Distance between neighbouring detectors, in pixels.
    pub fn detector_spacing(&self, side: usize) -> f64 {
        Self::detector_span(side) / self.num_detectors() as f64
    }

    /// True when the angles are exactly `i·π/P`.
    pub fn is_uniform(&self) -> bool {
        let p = self.num_views() as f64;
        self.angles.iter().enumerate().all(|(i, &a)| a == i as f64 * PI / p)
    }
}

pub fn make_geometry(num_views: usize, num_detectors: usize, span: AngleSpan) -> Result<Geometry> {
    if num_views == 0 {
        return Err(invalid("num_views must be at least 1"));
    }
    let AngleSpan::HalfCircle = span;
    let p = num_views as f64;
    let angles = (0..num_views).map(|i| i as f64 * PI / p).collect();
    Geometry::from_angles(angles, num_detectors)
}

/// Normalised measurement coordinate: view angle over π, and detector
/// position. Both lie in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coordinate {
    pub theta_norm: f64,
    pub l: f64,
}

impl Coordinate {
    pub fn new(theta_norm: f64, l: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta_norm) || !(0.0..=1.0).contains(&l) {
            return Err(invalid(format!("coordinate ({theta_norm}, {l}) outside the unit square")));
        }
        Ok(Self { theta_norm, l })
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.theta_norm, self.l]
    }
}

/// All `P·D` coordinates of a geometry, view-major.
pub fn coordinates_of(geometry: &Geometry) -> Vec<Coordinate> {
    let mut out = Vec::with_capacity(geometry.num_views() * geometry.num_detectors());
    for &angle in geometry.angles() {
        let theta_norm = angle / PI;
        for &l in geometry.detector_positions() {
            out.push(Coordinate { theta_norm, l });
        }
    }
    out
}

/// One ellipse of the phantom: intensity, semi-axes, centre and rotation
/// (degrees), in the `[-1, 1]²` frame.
#[derive(Debug, Clone, Copy)]
pub struct Ellipse {
    pub intensity: f64,
    pub semi_x: f64,
    pub semi_y: f64,
    pub center_x: f64,
    pub center_y: f64,
    pub rotation_deg: f64,
}

impl Ellipse {
    const fn new(intensity: f64, semi_x: f64, semi_y: f64, center_x: f64, center_y: f64, rotation_deg: f64) -> Self {
        Self { intensity, semi_x, semi_y, center_x, center_y, rotation_deg }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let dx = x - self.center_x;
        let dy = y - self.center_y;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.semi_x).powi(2) + (v / self.semi_y).powi(2) <= 1.0
    }
}

/// The ten ellipses of the contrast-enhanced ("modified") Shepp-Logan head
/// phantom, with intensities in `[0, 1]`.
pub const SHEPP_LOGAN: [Ellipse; 10] = [
    Ellipse::new(1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    Ellipse::new(-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    Ellipse::new(-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    Ellipse::new(-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    Ellipse::new(0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    Ellipse::new(0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    Ellipse::new(0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    Ellipse::new(0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    Ellipse::new(0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    Ellipse::new(0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

pub const MIN_PHANTOM_SIDE: usize = 16;

/// Shepp-Logan phantom sampled at pixel centres, clamped to `[0, 1]`.
pub fn make_shepp_logan(side: usize) -> Result<Image> {
    if side < MIN_PHANTOM_SIDE {
        return Err(invalid(format!("phantom side must be at least {MIN_PHANTOM_SIDE}, got {side}")));
    }
    let n = side as f64;
    let mut pixels = Vec::with_capacity(side * side);
    for row in 0..side {
        let y = 1.0 - (2 * row + 1) as f64 / n;
        for col in 0..side {
            let x = (2 * col + 1) as f64 / n - 1.0;
            let v: f64 = SHEPP_LOGAN.iter().filter(|e| e.contains(x, y)).map(|e| e.intensity).sum();
            pixels.push(v.clamp(0.0, 1.0));
        }
    }
    Image::new(side, pixels)
}
