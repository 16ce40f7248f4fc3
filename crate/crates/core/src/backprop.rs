//! Reference gradients: reverse accumulation through the recorded solver
//! program, and central finite differences of the discrete loss.
//!
//! The reverse pass replays the trajectory's step records as a flat tape of
//! two primitive operations, linear combinations and field evaluations, and
//! walks it backwards. It shares no code with the structured recursions in
//! [`crate::discrete`], which makes the two usable as cross-checks.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::problem::{vecops, Covector, LossSpec, TimeGrid, VectorField};
use crate::schemes::{solve_forward, Scheme, StepRecord, Trajectory};

#[derive(Debug)]
enum Op {
    /// `out = Σ c · slot`
    Combine { out: usize, terms: Vec<(f64, usize)> },
    /// `out = f(t, input, θ)`, with `input` evaluated at `primal`.
    Eval { out: usize, input: usize, t: f64, primal: Vec<f64> },
}

#[derive(Debug)]
struct Tape {
    slots: usize,
    ops: Vec<Op>,
    /// Slot holding each grid node's state.
    nodes: Vec<usize>,
}

impl Tape {
    fn slot(&mut self) -> usize {
        self.slots += 1;
        self.slots - 1
    }

    /// Every scheme family lowers to the same two operations, so a new
    /// `StepRecord` variant fails to compile here until it has a reverse sweep.
    fn record(traj: &Trajectory) -> Result<Self> {
        traj.check_records()?;
        let n_nodes = traj.states.len();
        let mut tape = Tape { slots: 0, ops: Vec::new(), nodes: Vec::with_capacity(n_nodes) };
        let z0 = tape.slot();
        tape.nodes.push(z0);
        let mut f_slots: Vec<Option<usize>> = vec![None; n_nodes];

        for record in &traj.records {
            match record {
                StepRecord::Staged { input, h, tableau, stage_times, stage_states, .. } => {
                    let z = tape.nodes[*input];
                    let mut ks: Vec<usize> = Vec::with_capacity(tableau.stages());
                    for i in 0..tableau.stages() {
                        let mut terms: Vec<(f64, usize)> = tableau.a[i]
                            .iter()
                            .enumerate()
                            .filter(|(_, a)| **a != 0.0)
                            .map(|(j, a)| (h * a, ks[j]))
                            .collect();
                        let y = if terms.is_empty() {
                            z
                        } else {
                            terms.insert(0, (1.0, z));
                            let y = tape.slot();
                            tape.ops.push(Op::Combine { out: y, terms });
                            y
                        };
                        let k = tape.slot();
                        tape.ops.push(Op::Eval {
                            out: k,
                            input: y,
                            t: stage_times[i],
                            primal: stage_states[i].0.clone(),
                        });
                        ks.push(k);
                    }
                    let mut terms = vec![(1.0, z)];
                    terms.extend(tableau.b.iter().zip(&ks).map(|(b, k)| (h * b, *k)));
                    let out = tape.slot();
                    tape.ops.push(Op::Combine { out, terms });
                    tape.nodes.push(out);
                }
                StepRecord::Multistep { first, h, alphas, betas, window_times, window_states, .. } => {
                    let k = betas.len();
                    let lead = alphas[k];
                    let mut terms = Vec::with_capacity(2 * k);
                    for j in 0..k {
                        let node = first + j;
                        let f = match f_slots[node] {
                            Some(s) => s,
                            None => {
                                let s = tape.slot();
                                tape.ops.push(Op::Eval {
                                    out: s,
                                    input: tape.nodes[node],
                                    t: window_times[j],
                                    primal: window_states[j].0.clone(),
                                });
                                f_slots[node] = Some(s);
                                s
                            }
                        };
                        if alphas[j] != 0.0 {
                            terms.push((-alphas[j] / lead, tape.nodes[node]));
                        }
                        if betas[j] != 0.0 {
                            terms.push((h * betas[j] / lead, f));
                        }
                    }
                    let out = tape.slot();
                    tape.ops.push(Op::Combine { out, terms });
                    tape.nodes.push(out);
                }
            }
        }
        Ok(tape)
    }
}

/// Output of a reverse sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BackpropResult {
    /// `dL/dθ`
    pub gradient: Covector,
    /// `∂L/∂z_n`: total cotangent of every node state.
    pub node_adjoints: Vec<Covector>,
}

/// Reverse accumulation through the recorded forward computation.
pub fn backprop(
    field: &dyn VectorField,
    theta: &[f64],
    base: &Trajectory,
    loss: &LossSpec,
) -> Result<BackpropResult> {
    let tape = Tape::record(base)?;
    let label_nodes = loss.label_nodes(&base.grid)?;
    let grads = loss.grads_nodes(&base.states, &label_nodes);
    let n = field.dim_state();

    let mut adj: Vec<Vec<f64>> = vec![vec![0.0; n]; tape.slots];
    for (g, &node) in grads.iter().zip(&label_nodes) {
        vecops::axpy(&mut adj[tape.nodes[node]], 1.0, g);
    }
    let mut theta_bar = vec![0.0; field.dim_param()];

    for op in tape.ops.iter().rev() {
        match op {
            Op::Combine { out, terms } => {
                let seed = adj[*out].clone();
                for (c, s) in terms {
                    vecops::axpy(&mut adj[*s], *c, &seed);
                }
            }
            Op::Eval { out, input, t, primal } => {
                let seed = &adj[*out];
                if seed.iter().all(|x| *x == 0.0) {
                    continue;
                }
                let dz = field.vjp_state(*t, primal, theta, seed);
                let dp = field.vjp_param(*t, primal, theta, seed);
                vecops::axpy(&mut adj[*input], 1.0, &dz);
                vecops::axpy(&mut theta_bar, 1.0, &dp);
            }
        }
    }

    let node_adjoints = tape.nodes.iter().map(|&s| Covector(adj[s].clone())).collect();
    Ok(BackpropResult { gradient: Covector(theta_bar), node_adjoints })
}

pub fn backprop_gradient(
    field: &dyn VectorField,
    theta: &[f64],
    base: &Trajectory,
    loss: &LossSpec,
) -> Result<Covector> {
    Ok(backprop(field, theta, base, loss)?.gradient)
}

/// Default finite-difference step; the step for `θ_j` is `ε·(1 + |θ_j|)`.
pub const DEFAULT_FD_EPSILON: f64 = 1e-6;

/// Discrete loss `L(θ)` from a fresh forward solve.
pub fn discrete_loss(
    field: &dyn VectorField,
    theta: &[f64],
    z0: &[f64],
    grid: &TimeGrid,
    scheme: &Scheme,
    loss: &LossSpec,
) -> Result<f64> {
    let nodes = loss.label_nodes(grid)?;
    let traj = solve_forward(field, theta, z0, grid, scheme)?;
    Ok(loss.eval_nodes(&traj.states, &nodes))
}

/// Central differences of the discrete loss, one coordinate at a time.
pub fn fd_gradient(
    field: &dyn VectorField,
    theta: &[f64],
    z0: &[f64],
    grid: &TimeGrid,
    scheme: &Scheme,
    loss: &LossSpec,
    epsilon: f64,
) -> Result<Covector> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let grad: Result<Vec<f64>> = (0..theta.len())
        .into_par_iter()
        .map(|j| {
            let step = epsilon * (1.0 + theta[j].abs());
            let mut plus = theta.to_vec();
            let mut minus = theta.to_vec();
            plus[j] += step;
            minus[j] -= step;
            let lp = discrete_loss(field, &plus, z0, grid, scheme, loss)?;
            let lm = discrete_loss(field, &minus, z0, grid, scheme, loss)?;
            let d = (lp - lm) / (plus[j] - minus[j]);
            if d.is_finite() {
                Ok(d)
            } else {
                Err(Error::NonFiniteLoss { index: j })
            }
        })
        .collect();
    grad.map(Covector)
}
