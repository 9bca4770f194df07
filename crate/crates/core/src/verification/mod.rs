//! Manufactured solutions, error norms, the inverse-inequality constant and
//! the energy / stability / convergence study drivers.

pub mod inverse;
pub mod mms;
pub mod studies;

pub use inverse::{
    cfl_max_dt, estimate_inverse_constant, inverse_constant_for, InverseEstimate, StabilityEstimate,
};
pub use mms::{mms_forced, mms_standing_wave, ManufacturedSolution};
pub use studies::{
    convergence_study, error_linf_l2, stability_sweep, temporal_study, ConvergenceRow,
    ConvergenceTable, RateAxis, StabilitySweep, SweepRow, SweepStatus, STABLE_DRIFT,
};
