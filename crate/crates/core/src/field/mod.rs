//! The coordinate MLP that represents a measurement field.
//!
//! A field is `N_φ ∘ γ`: a fixed Fourier feature mapping `γ` of the
//! normalised `(θ/π, l)` coordinate followed by a ReLU MLP with skip
//! connections that re-inject `γ(v)`, a linear penultimate layer and a
//! scalar output head.

mod codec;
mod ffm;
mod network;
mod train;

pub use codec::{read_field, write_field, decode_field, encode_field, FIELD_MAGIC, FIELD_VERSION};
pub use ffm::{ffm_apply, FfmConfig, FfmMode};
pub use network::{field_forward, field_loss_and_grad, query_field, Dense, MlpConfig, NeuralField};
pub use train::{train_field, Adam, TrainConfig, TrainedField};

use crate::geometry::Coordinate;

/// One training pair: a measurement coordinate and its response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateSample {
    pub coordinate: Coordinate,
    pub response: f64,
}

/// Pair every response of a sinogram with its coordinate.
pub fn samples_of(sinogram: &crate::tomo::Sinogram) -> Vec<CoordinateSample> {
    crate::geometry::coordinates_of(sinogram.geometry())
        .into_iter()
        .zip(sinogram.responses())
        .map(|(coordinate, &response)| CoordinateSample { coordinate, response })
        .collect()
}
