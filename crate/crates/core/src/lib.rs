//! Estimators of high-dimensional correlation matrices.
//!
//! The crate bundles three families of filters for a sample correlation
//! matrix `E`:
//!
//! - rotationally invariant estimators ([`rie`]): eigenvalue clipping,
//!   nonlinear shrinkage with or without an exponential autocorrelation
//!   kernel, and a moving-window cross-validated oracle;
//! - the average-linkage hierarchical clustering filter ([`hce`]);
//! - two-step composites that run a shrinkage filter and then the
//!   hierarchical filter on the unit-diagonal rescaled result.
//!
//! [`models`] builds block-diagonal and nested population matrices and draws
//! samples from the multiplicative noise model, [`losses`] evaluates six
//! matrix loss functions, and [`bench`] runs seeded Monte Carlo experiments
//! over all of it.

pub mod bench;
pub mod error;
pub mod hce;
pub mod linalg;
pub mod losses;
pub mod models;
pub mod report;
pub mod rie;

pub use error::{Error, Result};
pub use linalg::{SpectralDecomposition, SymmetricMatrix};
