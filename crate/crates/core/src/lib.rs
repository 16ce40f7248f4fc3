//! Sensitivity analysis for ODEs `ż = f(t, z, θ)` with constant parameters.
//!
//! Five gradient pipelines share one solver core:
//!
//! * [`continuous`]: adjoint ODE integrated backward with any scheme, gradient by quadrature;
//! * [`discrete`]: exact transpose of the recorded forward discretization;
//! * [`tangent`]: forward variational equation, directional derivatives;
//! * [`backprop`]: reverse accumulation through the solver program, plus finite differences;
//! * [`harness`]: problem zoo, experiment runner and reports.
//!
//! The discrete adjoint and reverse accumulation agree to round-off on every
//! scheme. The continuous adjoint agrees with them only in the limit `h → 0`,
//! at the order of the backward scheme.

pub mod backprop;
pub mod continuous;
pub mod discrete;
pub mod error;
pub mod fields;
pub mod harness;
pub mod problem;
pub mod schemes;
pub mod stats;
pub mod tangent;

pub use error::{Error, Result};
pub use problem::{
    make_grid, relative_discrepancy, validate_problem, Covector, Jacobian, LabelLoss, LossSpec,
    ParamVec, SquaredErrorLoss, StateVec, SumLoss, TimeGrid, ValidationReport, VectorField,
};
pub use schemes::{solve_forward, step_once, Scheme, StepRecord, Trajectory};
