//! Mixed finite element θ-scheme for the acoustic wave equation in
//! displacement–pressure form.
//!
//! The displacement lives in the lowest-order Raviart–Thomas space on a
//! uniform rectangular grid and the pressure is piecewise constant. Time
//! stepping uses the three-level θ-average, which conserves a discrete
//! energy and is unconditionally stable for `θ ≥ 1/4`.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases at the crate root fix the scalar to `f64`, which is what the
//! verification studies and the command-line tool use.

// `!(x > 0)` style tests are used on purpose so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod mesh;
pub mod mixed_spaces;
pub mod parallel;
pub mod quadrature;
pub mod scalar;
pub mod sparse;
pub mod theta_scheme;
pub mod verification;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type RectMesh = mesh::RectMesh<f64>;
pub type MaterialField = mixed_spaces::MaterialField<f64>;
pub type MixedOperators = mixed_spaces::MixedOperators<f64>;
pub type CsrMatrix = sparse::CsrMatrix<f64>;
pub type DenseMatrix = sparse::DenseMatrix<f64>;
pub type SolverConfig = sparse::SolverConfig<f64>;
pub type ThetaConfig = theta_scheme::ThetaConfig<f64>;
pub type ProblemSpec = theta_scheme::ProblemSpec<f64>;
pub type SchemeState = theta_scheme::SchemeState<f64>;
pub type EnergySample = theta_scheme::EnergySample<f64>;
pub type RunOutput = theta_scheme::RunOutput<f64>;
pub type ManufacturedSolution = verification::ManufacturedSolution<f64>;
pub type ConvergenceTable = verification::ConvergenceTable<f64>;

/// Single-precision variants, mostly useful for quick experiments.
pub type RectMesh32 = mesh::RectMesh<f32>;
pub type MixedOperators32 = mixed_spaces::MixedOperators<f32>;
pub type ProblemSpec32 = theta_scheme::ProblemSpec<f32>;
pub type ManufacturedSolution32 = verification::ManufacturedSolution<f32>;
