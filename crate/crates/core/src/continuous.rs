//! Differentiate-then-discretize: the adjoint ODE `ȧ = −a·f_z` integrated
//! backward with a freely chosen scheme, and the parameter gradient
//! `dL/dθ = −∫ a·f_θ dt` evaluated as a quadrature over the stored backward
//! solution (never as an extra state carried by the adjoint integration).
//!
//! Sign convention: `a(t_M) = −∂L/∂z(t_M)`, and at every earlier label node
//! the reset is `a ← a − ∂L/∂z(t_i)`. The delta-source form with `λ(t_N) = 0`
//! and a positive source is the same object with `λ = −a`. All public
//! gradients are `dL/dθ`.
//!
//! State values at off-node stage times: node states when the stage sits on
//! a node; the forward pass's stored stage states when the backward scheme
//! is the forward scheme; otherwise the nearest node state (ties go to the
//! upper node, where the backward step starts). The last case is the naive
//! mixed-scheme pipeline and is intentionally not corrected.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{vecops, Covector, LossSpec, StateVec, TimeGrid, VectorField};
use crate::schemes::{solve_forward, Scheme, SchemeKind, StepRecord, Tableau, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    LeftEndpoint,
    Trapezoid,
    /// Weights mirror the backward stepper's own increments.
    #[default]
    SchemeMatched,
}

impl fmt::Display for QuadratureRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuadratureRule::LeftEndpoint => "left-endpoint",
            QuadratureRule::Trapezoid => "trapezoid",
            QuadratureRule::SchemeMatched => "scheme-matched",
        })
    }
}

impl FromStr for QuadratureRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left-endpoint" => Ok(Self::LeftEndpoint),
            "trapezoid" => Ok(Self::Trapezoid),
            "scheme-matched" => Ok(Self::SchemeMatched),
            other => Err(Error::InvalidArgument(format!(
                "unknown quadrature rule `{other}` (expected left-endpoint, trapezoid or scheme-matched)"
            ))),
        }
    }
}

/// One evaluation of the adjoint right-hand side inside a backward step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalPoint {
    pub t: f64,
    pub z: StateVec,
    pub adjoint: Covector,
    pub weight: f64,
}

/// Backward step over `[t_n, t_{n+1}]`: `a_n = a_{n+1} + Σ w · (A · f_z)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdjointStep {
    pub lower: usize,
    pub points: Vec<EvalPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Jump {
    pub label: usize,
    pub node: usize,
    pub pre: Covector,
    pub post: Covector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResetMode {
    /// `a ← a − ∂L/∂z(t_i)`
    Accumulate,
    /// `a ← −∂L/∂z(t_i)`
    Overwrite,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdjointTrajectory {
    pub grid: TimeGrid,
    pub backward_scheme: String,
    pub mode: ResetMode,
    /// Value continuing below each node (post-reset at label nodes).
    pub adjoints: Vec<Covector>,
    pub jump_log: Vec<Jump>,
    /// `steps[n]` covers `[t_n, t_{n+1}]`.
    pub steps: Vec<AdjointStep>,
    pub label_nodes: Vec<usize>,
}

impl AdjointTrajectory {
    /// Value of `a` just above node `n` (pre-reset at label nodes).
    pub fn above(&self, n: usize) -> &Covector {
        self.jump_log
            .iter()
            .find(|j| j.node == n)
            .map(|j| &j.pre)
            .unwrap_or(&self.adjoints[n])
    }
}

/// Adams-type rows `a_{m−1} = a_m + h Σ β_k g_k` only; other multistep
/// families have no quadrature reading of their increments.
fn adams_form(alphas: &[f64]) -> bool {
    let k = alphas.len() - 1;
    alphas[k] != 0.0
        && (alphas[k - 1] + alphas[k]).abs() == 0.0
        && alphas[..k - 1].iter().all(|a| *a == 0.0)
}

struct StageStates<'a> {
    base: &'a Trajectory,
    same_scheme: bool,
}

impl StageStates<'_> {
    /// State for backward stage `i` of a step from node `m` down to `m − 1`
    /// with node fraction `c` (time `t_m − c·h`).
    ///
    /// Same scheme: the stored forward stage at the same instant. Forward
    /// stages sharing an abscissa are handed out in stage order, so RK4's two
    /// midpoint stages pair straight across rather than mirrored (the full
    /// mirror reproduces the discrete adjoint exactly).
    fn state(&self, tab: &Tableau, m: usize, i: usize) -> StateVec {
        let c = tab.c[i];
        if self.same_scheme {
            if let StepRecord::Staged { tableau, stage_states, .. } = &self.base.records[m - 1] {
                if tableau == tab {
                    let same = |x: f64, y: f64| (x - y).abs() < 1e-15;
                    let rank = tab.c[..i].iter().filter(|&&ci| same(ci, c)).count();
                    let matched = (0..tableau.stages())
                        .filter(|&j| same(tableau.c[j], 1.0 - c))
                        .nth(rank);
                    if let Some(j) = matched {
                        return stage_states[j].clone();
                    }
                }
            }
        }
        if c == 0.0 {
            return self.base.states[m].clone();
        }
        if c == 1.0 {
            return self.base.states[m - 1].clone();
        }
        if c <= 0.5 {
            self.base.states[m].clone()
        } else {
            self.base.states[m - 1].clone()
        }
    }
}

fn staged_backward_step(
    field: &dyn VectorField,
    theta: &[f64],
    grid: &TimeGrid,
    tab: &Tableau,
    states: &StageStates<'_>,
    m: usize,
    a: &[f64],
) -> (Vec<f64>, AdjointStep) {
    let h = grid.h();
    let t_upper = grid.node(m);
    let mut gs: Vec<Vec<f64>> = Vec::with_capacity(tab.stages());
    let mut points = Vec::with_capacity(tab.stages());
    for i in 0..tab.stages() {
        let mut ai = a.to_vec();
        for (j, aij) in tab.a[i].iter().enumerate() {
            if *aij != 0.0 {
                vecops::axpy(&mut ai, h * aij, &gs[j]);
            }
        }
        let tau = t_upper - tab.c[i] * h;
        let z = states.state(tab, m, i);
        gs.push(field.vjp_state(tau, &z, theta, &ai).0);
        points.push(EvalPoint { t: tau, z, adjoint: Covector(ai), weight: h * tab.b[i] });
    }
    let mut next = a.to_vec();
    for (p, g) in points.iter().zip(&gs) {
        vecops::axpy(&mut next, p.weight, g);
    }
    (next, AdjointStep { lower: m - 1, points })
}

/// Integrates the adjoint ODE backward along `base` under `backward_scheme`.
pub fn integrate_adjoint(
    field: &dyn VectorField,
    theta: &[f64],
    base: &Trajectory,
    loss: &LossSpec,
    backward_scheme: &Scheme,
    mode: ResetMode,
) -> Result<AdjointTrajectory> {
    if base.states.len() != base.grid.n_steps() + 1 {
        return Err(Error::GridMismatch("base trajectory does not cover its grid".into()));
    }
    if let SchemeKind::Multistep { alphas, .. } = backward_scheme.kind() {
        if !adams_form(alphas) {
            return Err(Error::InvalidScheme(format!(
                "backward integration supports Adams-type multistep schemes only; {backward_scheme} is not"
            )));
        }
    }
    let grid = base.grid;
    let n_steps = grid.n_steps();
    let n = field.dim_state();
    let label_nodes = loss.label_nodes(&grid)?;
    let grads = loss.grads_nodes(&base.states, &label_nodes);
    let last = label_nodes.len() - 1;
    let states = StageStates { base, same_scheme: *backward_scheme == base.scheme };

    let mut adjoints = vec![Covector::zeros(n); n_steps + 1];
    let mut steps: Vec<Option<AdjointStep>> = vec![None; n_steps];
    let mut jump_log = Vec::new();
    let mut a = vec![0.0; n];
    // Nodes visited since the last reset, most recent last.
    let mut segment: Vec<usize> = Vec::new();

    for m in (0..=n_steps).rev() {
        if let Some(label) = label_nodes.iter().position(|&node| node == m) {
            let g = &grads[label];
            if label == last {
                a = vecops::scaled(-1.0, g);
            } else {
                let pre = Covector(a.clone());
                match mode {
                    ResetMode::Accumulate => vecops::axpy(&mut a, -1.0, g),
                    ResetMode::Overwrite => a = vecops::scaled(-1.0, g),
                }
                jump_log.push(Jump { label, node: m, pre, post: Covector(a.clone()) });
            }
            segment.clear();
        }
        adjoints[m] = Covector(a.clone());
        segment.push(m);
        if m == 0 {
            break;
        }

        let (next, step) = match backward_scheme.kind() {
            SchemeKind::Staged(tab) => staged_backward_step(field, theta, &grid, tab, &states, m, &a),
            SchemeKind::Multistep { alphas, betas, startup } => {
                let k = betas.len();
                if segment.len() < k {
                    staged_backward_step(field, theta, &grid, startup, &states, m, &a)
                } else {
                    let h = grid.h();
                    let lead = alphas[k];
                    let mut next = a.clone();
                    let mut points = Vec::with_capacity(k);
                    for (j, beta) in betas.iter().enumerate() {
                        // Window slot j is node m + (K − 1 − j).
                        let node = segment[segment.len() - k + j];
                        debug_assert_eq!(node, m + (k - 1 - j));
                        let w = h * beta / lead;
                        let g = field.vjp_state(grid.node(node), &base.states[node], theta, &adjoints[node]);
                        vecops::axpy(&mut next, w, &g);
                        points.push(EvalPoint {
                            t: grid.node(node),
                            z: base.states[node].clone(),
                            adjoint: adjoints[node].clone(),
                            weight: w,
                        });
                    }
                    (next, AdjointStep { lower: m - 1, points })
                }
            }
        };
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { step: m - 1 });
        }
        a = next;
        steps[m - 1] = Some(step);
    }

    Ok(AdjointTrajectory {
        grid,
        backward_scheme: backward_scheme.name().to_string(),
        mode,
        adjoints,
        jump_log,
        steps: steps.into_iter().map(|s| s.expect("every step visited")).collect(),
        label_nodes,
    })
}

/// Accumulating-reset adjoint: `a(t_M) = −∂L/∂z(t_M)` and
/// `a ← a − ∂L/∂z(t_i)` at earlier labels.
pub fn solve_adjoint(
    field: &dyn VectorField,
    theta: &[f64],
    base: &Trajectory,
    loss: &LossSpec,
    backward_scheme: &Scheme,
) -> Result<AdjointTrajectory> {
    integrate_adjoint(field, theta, base, loss, backward_scheme, ResetMode::Accumulate)
}

/// `∫_{t_n}^{t_{n+1}} a·f_θ dt` for every step under `rule`.
fn step_integrals(
    field: &dyn VectorField,
    theta: &[f64],
    base: &Trajectory,
    adjoint: &AdjointTrajectory,
    rule: QuadratureRule,
) -> Result<Vec<Vec<f64>>> {
    if adjoint.grid != base.grid {
        return Err(Error::GridMismatch("adjoint and base trajectories use different grids".into()));
    }
    let grid = base.grid;
    let h = grid.h();
    let p = field.dim_param();
    let q = |n: usize, a: &[f64]| field.vjp_param(grid.node(n), &base.states[n], theta, a).0;
    Ok((0..grid.n_steps())
        .map(|n| match rule {
            QuadratureRule::LeftEndpoint => vecops::scaled(h, &q(n, adjoint.above(n))),
            QuadratureRule::Trapezoid => {
                let mut v = vecops::scaled(0.5 * h, &q(n, adjoint.above(n)));
                vecops::axpy(&mut v, 0.5 * h, &q(n + 1, &adjoint.adjoints[n + 1]));
                v
            }
            QuadratureRule::SchemeMatched => {
                let mut v = vec![0.0; p];
                for pt in &adjoint.steps[n].points {
                    vecops::axpy(&mut v, pt.weight, &field.vjp_param(pt.t, &pt.z, theta, &pt.adjoint));
                }
                v
            }
        })
        .collect())
}

/// `dL/dθ = −∫ a·f_θ dt`, split at label nodes so each side of a reset uses
/// its own adjoint value.
pub fn gradient_integral(
    field: &dyn VectorField,
    theta: &[f64],
    base: &Trajectory,
    adjoint: &AdjointTrajectory,
    rule: QuadratureRule,
) -> Result<Covector> {
    let pieces = step_integrals(field, theta, base, adjoint, rule)?;
    let mut total = vec![0.0; field.dim_param()];
    for piece in &pieces {
        vecops::axpy(&mut total, 1.0, piece);
    }
    Ok(Covector(vecops::scaled(-1.0, &total)))
}

/// Output of the hard-reset multi-label variant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HardResetGradient {
    /// `−Σ_i (M − i + 1) ∫_{t_{i−1}}^{t_i} a·f_θ dt`
    pub weighted: Covector,
    /// `−Σ_i ∫_{t0}^{t_i} a·f_θ dt` summed interval by interval.
    pub nested: Covector,
    pub adjoint: AdjointTrajectory,
}

/// Multi-label variant with overwriting resets `a(t_i) = −∂L/∂z(t_i)` and the
/// `(M − i + 1)`-weighted interval sum. Also returns the nested double sum
/// it rearranges, for cross-checking.
pub fn gradient_hard_reset(
    field: &dyn VectorField,
    theta: &[f64],
    base: &Trajectory,
    loss: &LossSpec,
    backward_scheme: &Scheme,
    rule: QuadratureRule,
) -> Result<HardResetGradient> {
    let adjoint = integrate_adjoint(field, theta, base, loss, backward_scheme, ResetMode::Overwrite)?;
    let pieces = step_integrals(field, theta, base, &adjoint, rule)?;
    let p = field.dim_param();
    let m = adjoint.label_nodes.len();

    let mut intervals: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut lower = 0;
    for &upper in &adjoint.label_nodes {
        let mut acc = vec![0.0; p];
        for piece in &pieces[lower..upper] {
            vecops::axpy(&mut acc, 1.0, piece);
        }
        intervals.push(acc);
        lower = upper;
    }

    let mut weighted = vec![0.0; p];
    for (i, iv) in intervals.iter().enumerate() {
        vecops::axpy(&mut weighted, (m - i) as f64, iv);
    }
    let mut nested = vec![0.0; p];
    for i in 0..m {
        for iv in &intervals[..=i] {
            vecops::axpy(&mut nested, 1.0, iv);
        }
    }
    Ok(HardResetGradient {
        weighted: Covector(vecops::scaled(-1.0, &weighted)),
        nested: Covector(vecops::scaled(-1.0, &nested)),
        adjoint,
    })
}

/// `∂L/∂z_n` by central differences: restart the forward solve from a
/// perturbed `z_n` at `t_n` with the base scheme and re-evaluate the loss.
/// Labels before node `n` keep their base states.
pub fn restart_state_gradient(
    field: &dyn VectorField,
    theta: &[f64],
    base: &Trajectory,
    loss: &LossSpec,
    node: usize,
    epsilon: f64,
) -> Result<Covector> {
    let grid = base.grid;
    if node >= grid.n_steps() {
        return Err(Error::InvalidArgument(format!("restart node {node} must be interior")));
    }
    let label_nodes = loss.label_nodes(&grid)?;
    let sub = crate::problem::make_grid(grid.node(node), grid.t_end(), grid.n_steps() - node)?;
    let zn = &base.states[node];
    let eval = |z: &[f64]| -> Result<f64> {
        let traj = solve_forward(field, theta, z, &sub, &base.scheme)?;
        let picked: Vec<&[f64]> = label_nodes
            .iter()
            .map(|&l| if l >= node { traj.states[l - node].0.as_slice() } else { base.states[l].0.as_slice() })
            .collect();
        Ok(loss.eval(&picked))
    };
    let mut out = Vec::with_capacity(zn.len());
    for j in 0..zn.len() {
        let step = epsilon * (1.0 + zn[j].abs());
        let mut plus = zn.0.clone();
        let mut minus = zn.0.clone();
        plus[j] += step;
        minus[j] -= step;
        out.push((eval(&plus)? - eval(&minus)?) / (plus[j] - minus[j]));
    }
    Ok(Covector(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ConstantDrift, LinearScalar, Logistic, ParamFreeDecay};
    use crate::problem::{make_grid, SumLoss};
    use std::sync::Arc;

    fn terminal(t: f64) -> LossSpec {
        LossSpec::terminal(t, Arc::new(SumLoss)).unwrap()
    }

    fn two_labels() -> LossSpec {
        LossSpec::new(vec![0.5, 1.0], Arc::new(SumLoss)).unwrap()
    }

    #[test]
    fn constant_adjoint_without_state_dependence() {
        let grid = make_grid(0.0, 1.0, 10).unwrap();
        let field = ConstantDrift { dim: 1 };
        let base = solve_forward(&field, &[0.4], &[1.0], &grid, &Scheme::rk4()).unwrap();
        for s in ["euler", "heun", "rk4", "ab2"] {
            let adj = solve_adjoint(&field, &[0.4], &base, &terminal(1.0), &s.parse().unwrap()).unwrap();
            assert!(adj.adjoints.iter().all(|a| a.0 == vec![-1.0]), "{s}");
        }
    }

    #[test]
    fn exponential_adjoint() {
        let grid = make_grid(0.0, 1.0, 1000).unwrap();
        let base = solve_forward(&LinearScalar, &[0.0], &[1.0], &grid, &Scheme::rk4()).unwrap();
        let adj = solve_adjoint(&LinearScalar, &[0.0], &base, &terminal(1.0), &Scheme::rk4()).unwrap();
        assert!(adj.adjoints.iter().all(|a| a.0 == vec![-1.0]));

        let base = solve_forward(&LinearScalar, &[1.0], &[1.0], &grid, &Scheme::rk4()).unwrap();
        let adj = solve_adjoint(&LinearScalar, &[1.0], &base, &terminal(1.0), &Scheme::rk4()).unwrap();
        assert!((adj.adjoints[0][0] + std::f64::consts::E).abs() < 1e-6);
        for (n, a) in adj.adjoints.iter().enumerate() {
            let exact = -(1.0 - grid.node(n)).exp();
            assert!((a[0] - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn accumulating_reset_at_label() {
        let grid = make_grid(0.0, 1.0, 10).unwrap();
        let base = solve_forward(&LinearScalar, &[0.0], &[1.0], &grid, &Scheme::rk4()).unwrap();
        let adj = solve_adjoint(&LinearScalar, &[0.0], &base, &two_labels(), &Scheme::rk4()).unwrap();
        for (n, a) in adj.adjoints.iter().enumerate() {
            let expected = if n <= 5 { -2.0 } else { -1.0 };
            assert_eq!(a.0, vec![expected], "node {n}");
        }
        assert_eq!(adj.jump_log.len(), 1);
        assert_eq!(adj.jump_log[0].pre.0, vec![-1.0]);
        assert_eq!(adj.jump_log[0].post.0, vec![-2.0]);
        assert_eq!(adj.above(5).0, vec![-1.0]);
    }

    #[test]
    fn gradient_examples() {
        let grid = make_grid(0.0, 1.0, 1000).unwrap();
        let field = ParamFreeDecay;
        let base = solve_forward(&field, &[0.0], &[1.0], &grid, &Scheme::rk4()).unwrap();
        let adj = solve_adjoint(&field, &[0.0], &base, &terminal(1.0), &Scheme::rk4()).unwrap();
        for rule in [QuadratureRule::LeftEndpoint, QuadratureRule::Trapezoid, QuadratureRule::SchemeMatched] {
            assert_eq!(gradient_integral(&field, &[0.0], &base, &adj, rule).unwrap().0, vec![0.0]);
        }

        for (theta, expected) in [(0.0, 1.0), (0.3, 0.3f64.exp())] {
            let base = solve_forward(&LinearScalar, &[theta], &[1.0], &grid, &Scheme::rk4()).unwrap();
            let adj = solve_adjoint(&LinearScalar, &[theta], &base, &terminal(1.0), &Scheme::rk4()).unwrap();
            let g = gradient_integral(&LinearScalar, &[theta], &base, &adj, QuadratureRule::SchemeMatched).unwrap();
            assert!((g[0] - expected).abs() < 1e-6, "θ={theta}: {}", g[0]);
        }

        let base = solve_forward(&LinearScalar, &[0.0], &[1.0], &grid, &Scheme::rk4()).unwrap();
        let adj = solve_adjoint(&LinearScalar, &[0.0], &base, &two_labels(), &Scheme::rk4()).unwrap();
        for rule in [QuadratureRule::LeftEndpoint, QuadratureRule::Trapezoid, QuadratureRule::SchemeMatched] {
            let g = gradient_integral(&LinearScalar, &[0.0], &base, &adj, rule).unwrap();
            assert!((g[0] - 1.5).abs() < 1e-6, "{rule}: {}", g[0]);
        }
    }

    #[test]
    fn quadrature_weights_sum_to_span() {
        let grid = make_grid(0.0, 2.0, 16).unwrap();
        let base = solve_forward(&Logistic, &[1.5, 2.0], &[0.5], &grid, &Scheme::heun()).unwrap();
        for s in ["euler", "heun", "rk4", "ab2"] {
            let adj = solve_adjoint(&Logistic, &[1.5, 2.0], &base, &two_labels_at(2.0), &s.parse().unwrap()).unwrap();
            let total: f64 = adj.steps.iter().flat_map(|st| st.points.iter().map(|p| p.weight)).sum();
            assert!((total - 2.0).abs() < 1e-12, "{s}: {total}");
        }
    }

    fn two_labels_at(t_end: f64) -> LossSpec {
        LossSpec::new(vec![0.5 * t_end, t_end], Arc::new(SumLoss)).unwrap()
    }

    #[test]
    fn jump_bookkeeping() {
        let grid = make_grid(0.0, 1.0, 20).unwrap();
        let loss = LossSpec::new(vec![0.25, 0.5, 0.75, 1.0], Arc::new(SumLoss)).unwrap();
        let base = solve_forward(&Logistic, &[1.5, 2.0], &[0.5], &grid, &Scheme::rk4()).unwrap();
        let adj = solve_adjoint(&Logistic, &[1.5, 2.0], &base, &loss, &Scheme::rk4()).unwrap();
        assert_eq!(adj.jump_log.len(), 3);
        let moved: f64 = adj
            .jump_log
            .iter()
            .map(|j| vecops::norm(&j.post.iter().zip(&j.pre.0).map(|(a, b)| a - b).collect::<Vec<_>>()))
            .sum();
        let nodes = loss.label_nodes(&grid).unwrap();
        let grads = loss.grads_nodes(&base.states, &nodes);
        let expected: f64 = grads[..3].iter().map(|g| vecops::norm(g)).sum();
        assert!((moved - expected).abs() <= 1e-14 * expected.max(1.0));
    }

    #[test]
    fn hard_reset_examples() {
        let grid = make_grid(0.0, 1.0, 100).unwrap();
        let base = solve_forward(&LinearScalar, &[0.0], &[1.0], &grid, &Scheme::rk4()).unwrap();
        let hr = gradient_hard_reset(
            &LinearScalar,
            &[0.0],
            &base,
            &two_labels(),
            &Scheme::rk4(),
            QuadratureRule::SchemeMatched,
        )
        .unwrap();
        assert!(hr.adjoint.adjoints.iter().all(|a| a.0 == vec![-1.0]));
        assert!((hr.weighted[0] - 1.5).abs() < 1e-12);
        assert!((hr.nested[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn single_label_variants_coincide() {
        let grid = make_grid(0.0, 1.0, 50).unwrap();
        for label in [1.0, 0.6] {
            let loss = LossSpec::terminal(label, Arc::new(SumLoss)).unwrap();
            let base = solve_forward(&Logistic, &[1.5, 2.0], &[0.5], &grid, &Scheme::rk4()).unwrap();
            for s in ["euler", "rk4", "ab2"] {
                let scheme: Scheme = s.parse().unwrap();
                let adj = solve_adjoint(&Logistic, &[1.5, 2.0], &base, &loss, &scheme).unwrap();
                let g = gradient_integral(&Logistic, &[1.5, 2.0], &base, &adj, QuadratureRule::SchemeMatched).unwrap();
                let hr = gradient_hard_reset(&Logistic, &[1.5, 2.0], &base, &loss, &scheme, QuadratureRule::SchemeMatched)
                    .unwrap();
                assert_eq!(g, hr.weighted, "{s}");
            }
        }
    }

    #[test]
    fn non_adams_backward_multistep_is_rejected() {
        // Two-step scheme with α = [−1/2, −1/2, 1] (consistent, not Adams).
        let odd = Scheme::multistep("odd", vec![-0.5, -0.5, 1.0], vec![0.5, 1.5], 1).unwrap();
        let grid = make_grid(0.0, 1.0, 10).unwrap();
        let base = solve_forward(&LinearScalar, &[0.3], &[1.0], &grid, &Scheme::rk4()).unwrap();
        assert!(matches!(
            solve_adjoint(&LinearScalar, &[0.3], &base, &terminal(1.0), &odd),
            Err(Error::InvalidScheme(_))
        ));
    }

    #[test]
    fn restart_gradient_matches_adjoint() {
        let grid = make_grid(0.0, 1.0, 1000).unwrap();
        let base = solve_forward(&Logistic, &[1.5, 2.0], &[0.5], &grid, &Scheme::rk4()).unwrap();
        let adj = solve_adjoint(&Logistic, &[1.5, 2.0], &base, &terminal(1.0), &Scheme::rk4()).unwrap();
        for node in [100, 500, 900] {
            let fd = restart_state_gradient(&Logistic, &[1.5, 2.0], &base, &terminal(1.0), node, 1e-6).unwrap();
            let a = &adj.adjoints[node];
            assert!((a[0] + fd[0]).abs() <= 1e-5 * fd[0].abs(), "node {node}: {} vs {}", a[0], fd[0]);
        }
    }

    #[test]
    fn quadrature_names_round_trip() {
        for r in [QuadratureRule::LeftEndpoint, QuadratureRule::Trapezoid, QuadratureRule::SchemeMatched] {
            assert_eq!(r.to_string().parse::<QuadratureRule>().unwrap(), r);
        }
        assert!("simpson".parse::<QuadratureRule>().is_err());
    }
}
