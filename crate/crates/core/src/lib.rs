//! Exact diagonalization and dynamics for truncated spin-boson models: the
//! quantum Rabi model, its parity-breaking perturbation and the two-mode
//! quantum Jahn-Teller model.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod equilibration;
pub mod error;
pub mod hilbert;
pub mod meanfield;
pub mod models;
pub mod regression;
pub mod scalar;
pub mod spectral;
pub mod symmetry;

pub use error::{Error, Result};
pub use scalar::{Real, C};

pub type Complex64 = C<f64>;
pub type ModelParams64 = models::ModelParams<f64>;
pub type HermitianMatrix64 = hilbert::HermitianMatrix<f64>;
pub type QuantumState64 = hilbert::QuantumState<f64>;
pub type Tridiagonal64 = symmetry::SymmetricTridiagonal<f64>;
pub type Spectrum64 = spectral::Spectrum<f64>;
