//! Sparse-view computed tomography with coordinate-based measurement fields.
//!
//! The crate is organised bottom-up:
//!
//! + [`geometry`]: image grids, parallel-beam acquisition geometry, the
//!   normalised `(θ/π, l)` coordinates and the Shepp-Logan phantom.
//! + [`tomo`]: ray-driven Radon projector, its exact adjoint, filtered
//!   backprojection and calibrated measurement noise.
//! + [`field`]: Fourier feature mapping, the coordinate MLP, its
//!   hand-written backward pass, Adam training and field serialisation.
//! + [`denoise`]: the pluggable denoiser used by RED and PnP.
//! + [`solvers`]: FISTA-TV, gradient-method RED and PnP-FISTA, all driven by
//!   a data-fidelity term that can blend real measurements with a
//!   synthesised field.
//! + [`metrics`] and [`io`]: SNR and the on-disk formats.

pub mod denoise;
pub mod error;
pub mod field;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod solvers;
pub mod tomo;

pub use error::{CoilError, Result};
pub use geometry::{coordinates_of, make_geometry, make_shepp_logan, AngleSpan, Coordinate, Geometry, Image};
pub use tomo::{add_noise, fbp, radon_adjoint, radon_forward, FbpWindow, NoiseSpec, Sinogram};
