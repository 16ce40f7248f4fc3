//! Forward sensitivities: the variational equation `η̇ = f_z η + f_θ ζ`
//! integrated with the base trajectory's own scheme, evaluating the
//! Jacobians at the stored stage states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{vecops, Covector, Jacobian, LossSpec, StateVec, TimeGrid, VectorField};
use crate::schemes::{Scheme, StepRecord, Trajectory};

/// Constant-in-time parameter perturbation direction `ζ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationDirection {
    zeta: Vec<f64>,
}

impl PerturbationDirection {
    pub fn new(zeta: Vec<f64>) -> Result<Self> {
        if zeta.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("perturbation direction must be finite".into()));
        }
        Ok(Self { zeta })
    }

    /// Unit direction `e_j` in a `dim`-dimensional parameter space.
    pub fn basis(dim: usize, j: usize) -> Self {
        let mut zeta = vec![0.0; dim];
        zeta[j] = 1.0;
        Self { zeta }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.zeta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentTrajectory {
    pub grid: TimeGrid,
    pub etas: Vec<StateVec>,
}

fn jacobians(field: &dyn VectorField, t: f64, z: &[f64], theta: &[f64]) -> Result<(Jacobian, Jacobian)> {
    let jz = field.jacobian_state(t, z, theta).ok_or(Error::MissingJacobian)?;
    let jp = field.jacobian_param(t, z, theta).ok_or(Error::MissingJacobian)?;
    Ok((jz, jp))
}

/// `f_z η + f_θ ζ` at `(t, z)`.
fn linearized_field(
    field: &dyn VectorField,
    theta: &[f64],
    t: f64,
    z: &[f64],
    eta: &[f64],
    zeta: &[f64],
) -> Result<Vec<f64>> {
    let (jz, jp) = jacobians(field, t, z, theta)?;
    let mut d = jz.mul_vec(eta);
    vecops::axpy(&mut d, 1.0, &jp.mul_vec(zeta));
    Ok(d)
}

/// Applies the linearization of one recorded step to the tangent window
/// (one vector for staged steps, `K` for multistep rows).
pub fn linearized_step(
    field: &dyn VectorField,
    theta: &[f64],
    record: &StepRecord,
    etas: &[&[f64]],
    zeta: &[f64],
) -> Result<StateVec> {
    match record {
        StepRecord::Staged { h, tableau, stage_times, stage_states, .. } => {
            let eta = etas[0];
            let mut ks: Vec<Vec<f64>> = Vec::with_capacity(tableau.stages());
            for i in 0..tableau.stages() {
                let mut hi = eta.to_vec();
                for (j, aij) in tableau.a[i].iter().enumerate() {
                    if *aij != 0.0 {
                        vecops::axpy(&mut hi, h * aij, &ks[j]);
                    }
                }
                ks.push(linearized_field(field, theta, stage_times[i], &stage_states[i], &hi, zeta)?);
            }
            let mut next = eta.to_vec();
            for (bi, k) in tableau.b.iter().zip(&ks) {
                vecops::axpy(&mut next, h * bi, k);
            }
            Ok(StateVec(next))
        }
        StepRecord::Multistep { h, alphas, betas, window_times, window_states, .. } => {
            let k = betas.len();
            let mut acc = vec![0.0; etas[0].len()];
            for j in 0..k {
                let d = linearized_field(field, theta, window_times[j], &window_states[j], etas[j], zeta)?;
                vecops::axpy(&mut acc, h * betas[j], &d);
                vecops::axpy(&mut acc, -alphas[j], etas[j]);
            }
            let inv = 1.0 / alphas[k];
            Ok(StateVec(acc.iter().map(|x| x * inv).collect()))
        }
    }
}

/// Integrates the tangent equation along `base` for direction `zeta`.
/// `η(t0) = 0` since the initial state does not depend on `θ`.
pub fn solve_tangent(
    field: &dyn VectorField,
    theta: &[f64],
    base: &Trajectory,
    zeta: &PerturbationDirection,
    scheme: &Scheme,
) -> Result<TangentTrajectory> {
    if *scheme != base.scheme {
        return Err(Error::GridMismatch(format!(
            "tangent scheme {scheme} differs from the base trajectory's {}",
            base.scheme
        )));
    }
    if zeta.as_slice().len() != field.dim_param() {
        return Err(Error::Dimension {
            what: "perturbation direction",
            expected: field.dim_param(),
            got: zeta.as_slice().len(),
        });
    }
    base.check_records()?;
    let n = field.dim_state();
    let mut etas: Vec<StateVec> = vec![StateVec::zeros(n)];
    for record in &base.records {
        let window: Vec<&[f64]> = match record {
            StepRecord::Staged { input, .. } => vec![&etas[*input]],
            StepRecord::Multistep { first, betas, .. } => {
                (0..betas.len()).map(|j| etas[first + j].0.as_slice()).collect()
            }
        };
        let next = linearized_step(field, theta, record, &window, zeta.as_slice())?;
        etas.push(next);
    }
    Ok(TangentTrajectory { grid: base.grid, etas })
}

/// `Σ_i ∂L/∂z(t_i) · η(t_i)`, the directional derivative `dL/dθ · ζ`.
pub fn directional_loss_derivative(
    loss: &LossSpec,
    base: &Trajectory,
    tangent: &TangentTrajectory,
) -> Result<f64> {
    if tangent.grid != base.grid {
        return Err(Error::GridMismatch("tangent and base trajectories use different grids".into()));
    }
    let nodes = loss.label_nodes(&base.grid)?;
    let grads = loss.grads_nodes(&base.states, &nodes);
    Ok(grads.iter().zip(&nodes).map(|(g, &n)| vecops::dot(g, &tangent.etas[n])).sum())
}

/// Full gradient from `P` directional solves along the basis directions.
pub fn tangent_gradient(
    field: &dyn VectorField,
    theta: &[f64],
    base: &Trajectory,
    loss: &LossSpec,
) -> Result<Covector> {
    let p = field.dim_param();
    let mut grad = Vec::with_capacity(p);
    for j in 0..p {
        let tan = solve_tangent(field, theta, base, &PerturbationDirection::basis(p, j), &base.scheme)?;
        grad.push(directional_loss_derivative(loss, base, &tan)?);
    }
    Ok(Covector(grad))
}
