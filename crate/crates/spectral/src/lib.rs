//! Spectral theory of Sturm-Liouville operators with a global constant delay
//! on metric graphs.
//!
//! The crate covers three layers:
//!
//! * [`forward`] builds characteristic functions of the two three-edge star
//!   problems from a pair of potentials, computes their eigenvalues and
//!   splits the spectrum into the two interleaved subspectra.
//! * [`inverse`] reconstructs the potentials back from subspectra or full
//!   spectra, and provides stability and support diagnostics.
//! * [`graph`] assembles global general solutions and characteristic
//!   determinants on arbitrary compact rooted trees with global delay.
//!
//! [`grid`] and [`model`] hold the shared numerical substrate: sampled
//! functions with Simpson quadrature, and the potential-mean-only model
//! functions with their zeros and infinite-product evaluation.

pub mod forward;
pub mod graph;
pub mod grid;
pub mod inverse;
pub mod io;
pub mod model;

pub use grid::{ComplexSeq, GridFn};
pub use model::{ModelFn, ModelZeros, ProductRep};

use num_complex::Complex64;

/// Errors shared by all modules.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("root search failed to converge from seed {seed}")]
    RootFailure { seed: Complex64 },
    #[error("winding count {expected} != {found} roots found in window Re rho in ({lo}, {hi})")]
    MissedRoots { expected: i64, found: i64, lo: f64, hi: f64 },
    #[error("unsupported multiplicity {0} (at most 2 is handled)")]
    UnsupportedMultiplicity(usize),
    #[error("evaluation near lambda = 0 is ill-posed: entirety defect {defect}")]
    IllPosedEvaluation { defect: f64 },
    #[error("classification failed, supply omega2/omega3 explicitly: {0}")]
    NeedsOmega(String),
    #[error("tree validation failed: {0}")]
    Validation(String),
    #[error("unsupported delay/geometry combination: {0}")]
    NotImplemented(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
