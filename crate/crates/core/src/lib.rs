//! Gaussian-state information measures for a thin superfluid film.
//!
//! The pipeline builds a mode basis on a pixel grid, forms thermal covariance
//! matrices of the interface field, and evaluates entropies and mutual
//! information between pixel regions. A reconstruction module recovers the
//! mode-space covariance from time-resolved two-point functions.

pub mod cli;
pub mod error;
pub mod fitting;
pub mod gaussian;
pub mod geometry;
pub mod physics;
pub mod reconstruct;
pub mod regions;

pub use error::{Error, Result};
pub use gaussian::{CovarianceMatrix, Labelling, SymplecticSpectrum};
pub use geometry::{BoundaryKind, BoundarySpec, Grid, ModeBasis};
pub use physics::{DerivedParams, FilmParams};
pub use regions::{RegionMask, SweepResult};
