//! Classical nonlinear Gibbs measures, truncated Fock-space Gibbs states and
//! the machinery that compares them.

pub mod classical;
pub mod config;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod hartree;
pub mod interaction;
pub mod linalg;
pub mod output;
pub mod potential;
pub mod spectral;
pub mod study;

pub use config::RunConfig;
pub use classical::{Energy, ReducedDensityMatrix, ReducedMatrix, ReducedMoment};
pub use error::{Error, Result};
pub use fock::{FockBasis, FockOperator, FockState};
pub use gaussian::{Ensemble, FieldSample};
pub use interaction::PairTensor;
pub use potential::{PairKind, PairPotential};
pub use spectral::{GreenKernel, GridSpec, OneBodyOperator, SchattenTrace, Trap};
