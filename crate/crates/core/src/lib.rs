//! Large-deviation rate functions for the largest eigenvalue of sample covariance
//! matrices `H_N = (1/M) Z^T Gamma Z` and of deformed Wigner matrices.
//!
//! The pipeline is: build a [`SpectralMeasure`] for the population spectrum, solve
//! the Dyson equation for the two branches of the inverse Stieltjes transform of
//! the limiting spectrum, then integrate their difference to obtain the rate.

pub mod dyson;
pub mod error;
pub mod extended;
pub mod measures;
pub mod model;
pub mod montecarlo;
pub mod quad;
pub mod rate;
pub mod roots;
pub mod wigner;

pub use dyson::{CovarianceModel, EdgeData, EntryLaw};
pub use error::{Error, Result};
pub use extended::Extended;
pub use measures::{DensityInput, DensityKind, EdgeBehavior, Edges, SpectralMeasure};
pub use model::Model;
