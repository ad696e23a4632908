use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::geometry::Coordinate;

/// Frequency layout of the Fourier feature mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FfmMode {
    /// Raw coordinates, no mapping.
    None,
    /// Exponential frequencies `k_i = 2^(i-1)`.
    Positional,
    /// Linearly spaced frequencies `k_i = π·i/2`.
    #[default]
    Linear,
}

impl FfmMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Positional => "positional",
            Self::Linear => "linear",
        }
    }

    pub(crate) fn code(&self) -> u8 {
        match self {
            Self::None => 0,
            Self::Positional => 1,
            Self::Linear => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::None),
            1 => Some(Self::Positional),
            2 => Some(Self::Linear),
            _ => None,
        }
    }
}

impl std::str::FromStr for FfmMode {
    type Err = crate::CoilError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "positional" => Ok(Self::Positional),
            "linear" => Ok(Self::Linear),
            other => Err(invalid(format!("unknown FFM mode '{other}' (expected none, positional or linear)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FfmConfig {
    pub mode: FfmMode,
    pub num_frequencies: usize,
}

impl Default for FfmConfig {
    fn default() -> Self {
        Self { mode: FfmMode::Linear, num_frequencies: 10 }
    }
}

impl FfmConfig {
    pub fn new(mode: FfmMode, num_frequencies: usize) -> Result<Self> {
        if num_frequencies == 0 {
            return Err(invalid("FFM needs at least one frequency"));
        }
        Ok(Self { mode, num_frequencies })
    }

    /// Length of `γ(v)`.
    pub fn output_dim(&self) -> usize {
        match self.mode {
            FfmMode::None => 2,
            _ => 4 * self.num_frequencies,
        }
    }

    /// The coefficient `k_i`, for `i` in `1..=L`.
    pub fn frequency(&self, i: usize) -> f64 {
        match self.mode {
            FfmMode::None => 0.0,
            FfmMode::Positional => 2f64.powi(i as i32 - 1),
            FfmMode::Linear => PI * i as f64 / 2.0,
        }
    }

    /// Write `γ(v)` into `out`, which must have length [`Self::output_dim`].
    ///
    /// Layout: for each frequency, for each coordinate component,
    /// `sin(k·π·v_c), cos(k·π·v_c)`.
    pub(crate) fn encode_into(&self, v: &Coordinate, out: &mut [f64]) {
        let comps = v.as_array();
        if self.mode == FfmMode::None {
            out.copy_from_slice(&comps);
            return;
        }
        let mut o = 0;
        for i in 1..=self.num_frequencies {
            let k = self.frequency(i);
            for c in comps {
                let (s, cs) = (k * PI * c).sin_cos();
                out[o] = s;
                out[o + 1] = cs;
                o += 2;
            }
        }
    }
}

pub fn ffm_apply(config: &FfmConfig, v: &Coordinate) -> Vec<f64> {
    let mut out = vec![0.0; config.output_dim()];
    config.encode_into(v, &mut out);
    out
}
