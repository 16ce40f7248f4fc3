//! C ABI over adjoint-lab.
//!
//! Handles are opaque and owned by the caller once returned: free problems
//! with [`adjl_problem_free`] and trajectories with [`adjl_trajectory_free`].
//! Every fallible call returns an [`AdjlStatus`]; on failure the message is
//! available from [`adjl_last_error`] on the same thread until the next call.
//! Panics never cross the boundary; they surface as `ADJL_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use adjoint_lab::backprop::{backprop_gradient, fd_gradient, DEFAULT_FD_EPSILON};
use adjoint_lab::continuous::{gradient_hard_reset, gradient_integral, solve_adjoint, QuadratureRule};
use adjoint_lab::discrete::{discrete_gradient, solve_discrete_adjoint};
use adjoint_lab::harness::zoo::{zoo, ProblemSpec, ResolvedProblem};
use adjoint_lab::harness::{self, ConfigError, RunOptions, SuiteConfig};
use adjoint_lab::tangent::tangent_gradient;
use adjoint_lab::{make_grid, solve_forward, Error, Scheme, Trajectory};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownName = 3,
    Dimension = 4,
    Solver = 5,
    Config = 6,
    Io = 7,
    Panic = 8,
}

/// Gradient pipelines.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjlMethod {
    /// Adjoint ODE integrated backward, gradient by quadrature.
    ContinuousAdjoint = 0,
    /// Overwriting resets with the weighted interval sum.
    ContinuousAdjointHardReset = 1,
    /// Exact transpose of the forward discretization.
    DiscreteAdjoint = 2,
    /// Reverse accumulation through the recorded steps.
    Backprop = 3,
    /// Central finite differences of the discrete loss.
    FiniteDifference = 4,
    /// One tangent solve per parameter.
    Tangent = 5,
}

/// A problem: field, loss, parameters and initial state.
pub struct AdjlProblem {
    spec: ProblemSpec,
    resolved: ResolvedProblem,
}

/// A forward solution with its step records.
pub struct AdjlTrajectory {
    traj: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(AdjlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Dimension { .. } => AdjlStatus::Dimension,
            Error::UnknownScheme(_) => AdjlStatus::UnknownName,
            Error::NonFinite { .. } | Error::NonFiniteLoss { .. } => AdjlStatus::Solver,
            _ => AdjlStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

fn fail<T>(status: AdjlStatus, msg: impl Into<String>) -> Result<T, Fail> {
    Err(Fail(status, msg.into()))
}

/// Runs `f`, translating errors and panics into a status plus last-error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AdjlStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AdjlStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AdjlStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return fail(AdjlStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(AdjlStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return fail(AdjlStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, need: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return fail(AdjlStatus::NullPointer, format!("{what} is null"));
    }
    if len != need {
        return fail(AdjlStatus::Dimension, format!("{what} has length {len}, expected {need}"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().map_or_else(|| fail(AdjlStatus::NullPointer, format!("{what} is null")), Ok)
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().map_or_else(|| fail(AdjlStatus::NullPointer, format!("{what} is null")), Ok)
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next `adjl_` call on the same thread.
#[no_mangle]
pub extern "C" fn adjl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a named problem from the zoo with its nominal parameters.
#[no_mangle]
pub unsafe extern "C" fn adjl_problem_from_zoo(name: *const c_char, out: *mut *mut AdjlProblem) -> AdjlStatus {
    guard(|| {
        if out.is_null() {
            return fail(AdjlStatus::NullPointer, "out is null");
        }
        let name = str_arg(name, "name")?;
        let spec = zoo(name).or_else(|e| fail(AdjlStatus::UnknownName, e.to_string()))?;
        let resolved = spec.resolve()?;
        *out = Box::into_raw(Box::new(AdjlProblem { spec, resolved }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn adjl_problem_free(problem: *mut AdjlProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// State dimension `N` and parameter dimension `P`.
#[no_mangle]
pub unsafe extern "C" fn adjl_problem_dims(
    problem: *const AdjlProblem,
    n_state: *mut usize,
    n_param: *mut usize,
) -> AdjlStatus {
    guard(|| {
        let p = handle(problem, "problem")?;
        if n_state.is_null() || n_param.is_null() {
            return fail(AdjlStatus::NullPointer, "output pointer is null");
        }
        *n_state = p.resolved.field.dim_state();
        *n_param = p.resolved.field.dim_param();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn adjl_problem_set_theta(problem: *mut AdjlProblem, theta: *const f64, len: usize) -> AdjlStatus {
    guard(|| {
        let p = handle_mut(problem, "problem")?;
        let theta = slice_arg(theta, len, "theta")?;
        let want = p.resolved.field.dim_param();
        if len != want {
            return fail(AdjlStatus::Dimension, format!("theta has length {len}, expected {want}"));
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return fail(AdjlStatus::InvalidArgument, "theta must be finite");
        }
        p.spec.theta = theta.to_vec();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn adjl_problem_set_z0(problem: *mut AdjlProblem, z0: *const f64, len: usize) -> AdjlStatus {
    guard(|| {
        let p = handle_mut(problem, "problem")?;
        let z0 = slice_arg(z0, len, "z0")?;
        let want = p.resolved.field.dim_state();
        if len != want {
            return fail(AdjlStatus::Dimension, format!("z0 has length {len}, expected {want}"));
        }
        if z0.iter().any(|x| !x.is_finite()) {
            return fail(AdjlStatus::InvalidArgument, "z0 must be finite");
        }
        p.spec.z0 = z0.to_vec();
        Ok(())
    })
}

/// Solves forward over `[t0, T]` in `n_steps` uniform steps with the named
/// scheme (`euler`, `heun`, `rk4`, `ab2`).
#[no_mangle]
pub unsafe extern "C" fn adjl_solve_forward(
    problem: *const AdjlProblem,
    scheme: *const c_char,
    n_steps: usize,
    out: *mut *mut AdjlTrajectory,
) -> AdjlStatus {
    guard(|| {
        let p = handle(problem, "problem")?;
        if out.is_null() {
            return fail(AdjlStatus::NullPointer, "out is null");
        }
        let scheme: Scheme = str_arg(scheme, "scheme")?.parse()?;
        let grid = make_grid(p.spec.t0, p.spec.t_end, n_steps)?;
        let traj = solve_forward(p.resolved.field.as_ref(), &p.spec.theta, &p.spec.z0, &grid, &scheme)?;
        *out = Box::into_raw(Box::new(AdjlTrajectory { traj }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn adjl_trajectory_free(traj: *mut AdjlTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Copies `z(T)` into `out` (length `N`).
#[no_mangle]
pub unsafe extern "C" fn adjl_trajectory_final_state(traj: *const AdjlTrajectory, out: *mut f64, len: usize) -> AdjlStatus {
    guard(|| {
        let t = handle(traj, "trajectory")?;
        let z = t.traj.final_state();
        out_slice(out, len, z.len(), "out")?.copy_from_slice(z);
        Ok(())
    })
}

/// `dL/dθ` by `method` into `out` (length `P`). `backward_scheme` applies
/// to the continuous methods only and may be null to reuse the forward
/// scheme; it must be null for the others. The trajectory must come from
/// this problem with its current parameters and initial state.
#[no_mangle]
pub unsafe extern "C" fn adjl_gradient(
    problem: *const AdjlProblem,
    traj: *const AdjlTrajectory,
    method: AdjlMethod,
    backward_scheme: *const c_char,
    out: *mut f64,
    len: usize,
) -> AdjlStatus {
    guard(|| {
        let p = handle(problem, "problem")?;
        let t = &handle(traj, "trajectory")?.traj;
        let field = p.resolved.field.as_ref();
        let loss = &p.resolved.loss;
        let theta = &p.spec.theta;
        if t.theta.0 != *theta || t.states[0].0 != p.spec.z0 || t.states[0].len() != field.dim_state() {
            return fail(AdjlStatus::InvalidArgument, "trajectory was not solved from this problem's current theta and z0");
        }
        let continuous = matches!(method, AdjlMethod::ContinuousAdjoint | AdjlMethod::ContinuousAdjointHardReset);
        let backward: Scheme = if backward_scheme.is_null() {
            t.scheme.clone()
        } else if continuous {
            str_arg(backward_scheme, "backward_scheme")?.parse()?
        } else {
            return fail(AdjlStatus::InvalidArgument, "backward_scheme applies to continuous methods only");
        };
        let rule = QuadratureRule::SchemeMatched;
        let g = match method {
            AdjlMethod::ContinuousAdjoint => {
                let adj = solve_adjoint(field, theta, t, loss, &backward)?;
                gradient_integral(field, theta, t, &adj, rule)?
            }
            AdjlMethod::ContinuousAdjointHardReset => gradient_hard_reset(field, theta, t, loss, &backward, rule)?.weighted,
            AdjlMethod::DiscreteAdjoint => {
                let adj = solve_discrete_adjoint(field, theta, t, loss)?;
                discrete_gradient(field, theta, t, &adj)?
            }
            AdjlMethod::Backprop => backprop_gradient(field, theta, t, loss)?,
            AdjlMethod::FiniteDifference => {
                fd_gradient(field, theta, &p.spec.z0, &t.grid, &t.scheme, loss, DEFAULT_FD_EPSILON)?
            }
            AdjlMethod::Tangent => tangent_gradient(field, theta, t, loss)?,
        };
        out_slice(out, len, g.len(), "out")?.copy_from_slice(&g);
        Ok(())
    })
}

/// Runs a suite given as TOML text and writes reports under `out_dir`.
/// `passed` receives 1 if every assertion held, else 0.
#[no_mangle]
pub unsafe extern "C" fn adjl_run_suite(config_toml: *const c_char, out_dir: *const c_char, passed: *mut c_int) -> AdjlStatus {
    guard(|| {
        let text = str_arg(config_toml, "config_toml")?;
        let dir = str_arg(out_dir, "out_dir")?;
        if passed.is_null() {
            return fail(AdjlStatus::NullPointer, "passed is null");
        }
        let cfg = SuiteConfig::parse(text).or_else(|e: ConfigError| fail(AdjlStatus::Config, e.to_string()))?;
        let outcome = harness::run_suite(&cfg, RunOptions::default()).or_else(|e| fail(AdjlStatus::Io, e.to_string()))?;
        harness::write_outcome(Path::new(dir), &outcome).or_else(|e| fail(AdjlStatus::Io, e.to_string()))?;
        *passed = c_int::from(outcome.summary.passed);
        Ok(())
    })
}
