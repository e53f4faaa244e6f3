//! Pseudo-spectral simulation and verification toolkit for an incompressible
//! flow coupled to a symmetric traceless Q-tensor order parameter on a
//! periodic box.
//!
//! The crate provides the pointwise tensor algebra and polynomial bulk
//! potential, exact spectral operators on `[0, 2pi)^dim`, the coupled
//! transport/relaxation dynamics with elastic and rotational stresses,
//! IMEX time integration, and the diagnostic machinery used to check
//! maximum principles, decay rates, energy dissipation, continuous
//! dependence on data, and local-regularity indicators.
//!
//! Everything is generic over the scalar type (`f32`/`f64` through
//! [`scalar::Real`]); the `*64` aliases below fix the default `f64`
//! instantiation used by the CLI and most tests.

pub mod algebra;
pub mod diagnostics;
pub mod dynamics;
pub mod checkpoint;
pub mod error;
pub mod field;
pub mod grid;
pub mod init;
pub mod regularity;
pub mod scalar;
pub mod timestepper;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Grid64 = grid::Grid<f64>;
pub type ScalarField64 = field::ScalarField<f64>;
pub type VectorField64 = field::VectorField<f64>;
pub type TensorField64 = field::TensorField<f64>;
pub type TracelessSym364 = algebra::TracelessSym3<f64>;
pub type PotentialParams64 = algebra::PotentialParams<f64>;
