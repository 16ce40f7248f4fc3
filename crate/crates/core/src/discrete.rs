//! Exact transpose of the recorded forward discretization.
//!
//! There is deliberately no scheme argument anywhere in this module: the
//! transposition is read off the base trajectory's step records, so the
//! backward pass always uses the forward pass's scheme, nodes and stage
//! states, including multistep startup steps and boundary rows.
//!
//! Staged steps are transposed stage by stage in reverse order:
//!
//! ```text
//! k̄_i = h b_i λ_{n+1} + Σ_{j>i} h a_{ji} μ_j,   μ_i = k̄_i · f_z(Y_i)
//! λ_n += λ_{n+1} + Σ_i μ_i
//! ```
//!
//! Multistep rows `Σ α_k z_{n+k} = h Σ β_k f_{n+k}` are swept in reverse;
//! with `ν = λ_{n+K} / α_K` each row contributes `−α_k ν + h β_k ν · f_z`
//! to `λ_{n+k}`, i.e. the shifts `T_k` become `T_{−k}`.
//!
//! `λ_n` is the node cotangent `∂L/∂z_n`. The row multipliers of the
//! Lagrangian form are `ν`; both conventions agree at the final node, where
//! `λ_N` is seeded with the loss gradient.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::{vecops, Covector, LossSpec, TimeGrid, VectorField};
use crate::schemes::{StepRecord, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteAdjointState {
    pub grid: TimeGrid,
    /// `∂L/∂z_n` at every node.
    pub lambdas: Vec<Covector>,
    /// For each step record, the cotangent paired with each of its `f`
    /// evaluations (stages, or window nodes for multistep rows).
    pub eval_cotangents: Vec<Vec<Covector>>,
}

/// Transposed application of one recorded step.
#[derive(Debug, Clone, PartialEq)]
pub struct TransposedStep {
    /// Cotangent contributions to the step's input nodes, in window order.
    pub inputs: Vec<Covector>,
    pub eval_cotangents: Vec<Covector>,
}

/// Pulls the output cotangent of one step back to its inputs.
pub fn transpose_step(
    field: &dyn VectorField,
    theta: &[f64],
    record: &StepRecord,
    lambda_out: &[f64],
) -> TransposedStep {
    match record {
        StepRecord::Staged { h, tableau, stage_times, stage_states, .. } => {
            let s = tableau.stages();
            let mut kbar: Vec<Vec<f64>> = vec![Vec::new(); s];
            let mut mu: Vec<Vec<f64>> = vec![Vec::new(); s];
            for i in (0..s).rev() {
                let mut kb = vecops::scaled(h * tableau.b[i], lambda_out);
                for j in i + 1..s {
                    let aji = tableau.a[j][i];
                    if aji != 0.0 {
                        vecops::axpy(&mut kb, h * aji, &mu[j]);
                    }
                }
                mu[i] = field.vjp_state(stage_times[i], &stage_states[i], theta, &kb).0;
                kbar[i] = kb;
            }
            let mut lam_in = lambda_out.to_vec();
            for m in &mu {
                vecops::axpy(&mut lam_in, 1.0, m);
            }
            TransposedStep {
                inputs: vec![Covector(lam_in)],
                eval_cotangents: kbar.into_iter().map(Covector).collect(),
            }
        }
        StepRecord::Multistep { h, alphas, betas, window_times, window_states, .. } => {
            let k = betas.len();
            let nu = vecops::scaled(1.0 / alphas[k], lambda_out);
            let mut inputs = Vec::with_capacity(k);
            let mut evals = Vec::with_capacity(k);
            for j in 0..k {
                let w = vecops::scaled(h * betas[j], &nu);
                let mut contrib = field.vjp_state(window_times[j], &window_states[j], theta, &w).0;
                vecops::axpy(&mut contrib, -alphas[j], &nu);
                inputs.push(Covector(contrib));
                evals.push(Covector(w));
            }
            TransposedStep { inputs, eval_cotangents: evals }
        }
    }
}

fn input_nodes(record: &StepRecord) -> Vec<usize> {
    match record {
        StepRecord::Staged { input, .. } => vec![*input],
        StepRecord::Multistep { first, betas, .. } => (0..betas.len()).map(|j| first + j).collect(),
    }
}

/// Node-reversed sweep over the base trajectory's records, adding
/// `∂L/∂z(t_i)` at each label node.
pub fn solve_discrete_adjoint(
    field: &dyn VectorField,
    theta: &[f64],
    base: &Trajectory,
    loss: &LossSpec,
) -> Result<DiscreteAdjointState> {
    base.check_records()?;
    let nodes = loss.label_nodes(&base.grid)?;
    let grads = loss.grads_nodes(&base.states, &nodes);
    let n = field.dim_state();

    let mut lambdas: Vec<Covector> = vec![Covector::zeros(n); base.states.len()];
    for (g, &node) in grads.iter().zip(&nodes) {
        vecops::axpy(&mut lambdas[node], 1.0, g);
    }
    let mut eval_cotangents = vec![Vec::new(); base.records.len()];
    for (idx, record) in base.records.iter().enumerate().rev() {
        let out = record.output();
        let lam_out = lambdas[out].clone();
        let step = transpose_step(field, theta, record, &lam_out);
        for (node, c) in input_nodes(record).into_iter().zip(&step.inputs) {
            vecops::axpy(&mut lambdas[node], 1.0, c);
        }
        eval_cotangents[idx] = step.eval_cotangents;
    }
    Ok(DiscreteAdjointState { grid: base.grid, lambdas, eval_cotangents })
}

/// `dL/dθ = Σ_steps Σ_evals k̄ · f_θ` at the recorded evaluation points.
pub fn discrete_gradient(
    field: &dyn VectorField,
    theta: &[f64],
    base: &Trajectory,
    adj: &DiscreteAdjointState,
) -> Result<Covector> {
    if adj.grid != base.grid || adj.eval_cotangents.len() != base.records.len() {
        return Err(Error::GridMismatch("adjoint state was not built from this trajectory".into()));
    }
    let mut grad = vec![0.0; field.dim_param()];
    for (record, cots) in base.records.iter().zip(&adj.eval_cotangents) {
        let points: Vec<(f64, &[f64])> = match record {
            StepRecord::Staged { stage_times, stage_states, .. } => {
                stage_times.iter().copied().zip(stage_states.iter().map(|s| s.0.as_slice())).collect()
            }
            StepRecord::Multistep { window_times, window_states, .. } => {
                window_times.iter().copied().zip(window_states.iter().map(|s| s.0.as_slice())).collect()
            }
        };
        if points.len() != cots.len() {
            return Err(Error::GridMismatch("evaluation cotangents do not match step record".into()));
        }
        for ((t, z), c) in points.into_iter().zip(cots) {
            if c.iter().all(|x| *x == 0.0) {
                continue;
            }
            vecops::axpy(&mut grad, 1.0, &field.vjp_param(t, z, theta, c));
        }
    }
    Ok(Covector(grad))
}
