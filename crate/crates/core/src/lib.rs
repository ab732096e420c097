//! Factorized tensor radiance fields trained from a handful of posed views.
//!
//! Density and appearance live in low-rank (vector-matrix or CP) factorized
//! voxel grids. Frequency masks on density components, appearance features
//! and the decoder's positional encoding, plus an occlusion penalty on
//! near-camera density, regularize training from sparse views.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision used by the command-line tools.

pub mod checkpoint;
pub mod dataset;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod grid;
pub mod io;
pub mod mask;
pub mod math;
pub mod model;
pub mod render;
pub mod scalar;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Precision used for training runs and checkpoints.
pub type Real = f32;

pub type DensityGrid = grid::FactorizedDensityGrid<Real>;
pub type AppearanceGrid = grid::FactorizedAppearanceGrid<Real>;
pub type DensityGrid64 = grid::FactorizedDensityGrid<f64>;
pub type AppearanceGrid64 = grid::FactorizedAppearanceGrid<f64>;
pub type RadianceModel = model::Model<Real>;
pub type RadianceModel64 = model::Model<f64>;
pub type TrainState = train::TrainState<Real>;


