//! Forward integration with explicit staged (Runge–Kutta) and explicit
//! linear multistep schemes.
//!
//! Every step is recorded in a [`StepRecord`] holding the exact inputs and
//! stage evaluations, so reverse passes can transpose the computation that
//! actually ran instead of an approximation of it.
//!
//! Multistep schemes use the general explicit form
//!
//! ```text
//! Σ_{k=0}^{K} α_k z_{n+k} = h Σ_{k=0}^{K-1} β_k f(t_{n+k}, z_{n+k}, θ)
//! ```
//!
//! with the first `K − 1` steps produced by classic RK4.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{vecops, ParamVec, StateVec, TimeGrid, VectorField};

/// Butcher tableau of an explicit staged method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tableau {
    /// Row `i` holds `a_{i,0..i}`; strictly lower triangular by construction.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl Tableau {
    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn euler() -> Self {
        Self { a: vec![vec![]], b: vec![1.0], c: vec![0.0] }
    }

    pub fn heun() -> Self {
        Self { a: vec![vec![], vec![1.0]], b: vec![0.5, 0.5], c: vec![0.0, 1.0] }
    }

    pub fn rk4() -> Self {
        Self {
            a: vec![vec![], vec![0.5], vec![0.0, 0.5], vec![0.0, 0.0, 1.0]],
            b: vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
            c: vec![0.0, 0.5, 0.5, 1.0],
        }
    }

    fn validate(&self) -> Result<()> {
        let s = self.stages();
        if s == 0 {
            return Err(Error::InvalidScheme("tableau has no stages".into()));
        }
        if self.a.len() != s || self.c.len() != s {
            return Err(Error::InvalidScheme("tableau a, b, c sizes disagree".into()));
        }
        for (i, row) in self.a.iter().enumerate() {
            if row.len() != i {
                return Err(Error::InvalidScheme(format!(
                    "tableau row {i} has {} entries; explicit schemes need exactly {i}",
                    row.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SchemeKind {
    Staged(Tableau),
    Multistep {
        /// `α_0..=α_K`
        alphas: Vec<f64>,
        /// `β_0..β_{K-1}`
        betas: Vec<f64>,
        startup: Tableau,
    },
}

/// A discrete integrator identity. Two trajectories were produced by "the
/// same scheme" exactly when their `Scheme` values are equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scheme {
    name: String,
    kind: SchemeKind,
    order: u32,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl Scheme {
    pub fn staged(name: impl Into<String>, tableau: Tableau, order: u32) -> Result<Self> {
        tableau.validate()?;
        Ok(Self { name: name.into(), kind: SchemeKind::Staged(tableau), order })
    }

    /// Explicit multistep scheme with an RK4 startup.
    pub fn multistep(
        name: impl Into<String>,
        alphas: Vec<f64>,
        betas: Vec<f64>,
        order: u32,
    ) -> Result<Self> {
        if alphas.len() < 2 {
            return Err(Error::InvalidScheme("multistep needs K ≥ 1 (at least two alphas)".into()));
        }
        let k = alphas.len() - 1;
        if alphas[k] == 0.0 {
            return Err(Error::InvalidScheme("leading coefficient α_K must be non-zero".into()));
        }
        if betas.len() != k {
            return Err(Error::InvalidScheme(format!(
                "explicit multistep needs exactly K = {k} betas (β_K absent), got {}",
                betas.len()
            )));
        }
        let sum: f64 = alphas.iter().sum();
        if sum.abs() > 1e-12 * alphas.iter().map(|a| a.abs()).sum::<f64>() {
            return Err(Error::InvalidScheme(format!("inconsistent scheme: Σ α_k = {sum} ≠ 0")));
        }
        Ok(Self {
            name: name.into(),
            kind: SchemeKind::Multistep { alphas, betas, startup: Tableau::rk4() },
            order,
        })
    }

    pub fn euler() -> Self {
        Self { name: "euler".into(), kind: SchemeKind::Staged(Tableau::euler()), order: 1 }
    }

    pub fn heun() -> Self {
        Self { name: "heun".into(), kind: SchemeKind::Staged(Tableau::heun()), order: 2 }
    }

    pub fn rk4() -> Self {
        Self { name: "rk4".into(), kind: SchemeKind::Staged(Tableau::rk4()), order: 4 }
    }

    /// Two-step Adams–Bashforth: `z_{n+2} − z_{n+1} = h(3/2 f_{n+1} − 1/2 f_n)`.
    pub fn ab2() -> Self {
        Self {
            name: "ab2".into(),
            kind: SchemeKind::Multistep {
                alphas: vec![0.0, -1.0, 1.0],
                betas: vec![-0.5, 1.5],
                startup: Tableau::rk4(),
            },
            order: 2,
        }
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["euler", "heun", "rk4", "ab2"]
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &SchemeKind {
        &self.kind
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn is_staged(&self) -> bool {
        matches!(self.kind, SchemeKind::Staged(_))
    }

    /// Number of prior nodes a step consumes (`K` for multistep, 1 for staged).
    pub fn window(&self) -> usize {
        match &self.kind {
            SchemeKind::Staged(_) => 1,
            SchemeKind::Multistep { alphas, .. } => alphas.len() - 1,
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Self::euler()),
            "heun" => Ok(Self::heun()),
            "rk4" => Ok(Self::rk4()),
            "ab2" => Ok(Self::ab2()),
            other => Err(Error::UnknownScheme(other.to_string())),
        }
    }
}

/// Everything needed to recompute (and transpose) one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StepRecord {
    Staged {
        /// Node the step starts from; it produces node `input + 1`.
        input: usize,
        t: f64,
        h: f64,
        tableau: Tableau,
        /// True for multistep startup steps.
        startup: bool,
        state_in: StateVec,
        stage_times: Vec<f64>,
        stage_states: Vec<StateVec>,
        stage_derivs: Vec<StateVec>,
    },
    Multistep {
        /// First node of the window; the step produces node `first + K`.
        first: usize,
        t: f64,
        h: f64,
        alphas: Vec<f64>,
        betas: Vec<f64>,
        window_times: Vec<f64>,
        window_states: Vec<StateVec>,
        window_derivs: Vec<StateVec>,
    },
}

impl StepRecord {
    /// Index of the node this step produced.
    pub fn output(&self) -> usize {
        match self {
            StepRecord::Staged { input, .. } => input + 1,
            StepRecord::Multistep { first, alphas, .. } => first + alphas.len() - 1,
        }
    }

    pub fn is_startup(&self) -> bool {
        matches!(self, StepRecord::Staged { startup: true, .. })
    }

    /// Recomputes the step's output from the stored inputs.
    pub fn replay(&self, field: &dyn VectorField, theta: &[f64]) -> StateVec {
        match self {
            StepRecord::Staged { t, h, tableau, state_in, .. } => {
                staged_step(field, theta, tableau, state_in, *t, *h, false, 0).0
            }
            StepRecord::Multistep { first, t, h, alphas, betas, window_states, window_derivs, .. } => {
                multistep_step(alphas, betas, window_states, window_derivs, *first, *t, *h).0
            }
        }
    }
}

/// States at every node plus the step records that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub scheme: Scheme,
    pub theta: ParamVec,
    pub states: Vec<StateVec>,
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn final_state(&self) -> &StateVec {
        self.states.last().expect("trajectory has at least two nodes")
    }

    pub fn check_records(&self) -> Result<()> {
        let n = self.grid.n_steps();
        if self.states.len() != n + 1 {
            return Err(Error::MissingRecords(format!(
                "expected {} states, found {}",
                n + 1,
                self.states.len()
            )));
        }
        if self.records.len() != n {
            return Err(Error::MissingRecords(format!(
                "expected {n} step records, found {}",
                self.records.len()
            )));
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.output() != i + 1 {
                return Err(Error::MissingRecords(format!(
                    "record {i} produces node {} instead of {}",
                    r.output(),
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn staged_step(
    field: &dyn VectorField,
    theta: &[f64],
    tableau: &Tableau,
    z: &[f64],
    t: f64,
    h: f64,
    startup: bool,
    input: usize,
) -> (StateVec, StepRecord) {
    let s = tableau.stages();
    let mut stage_states = Vec::with_capacity(s);
    let mut stage_derivs: Vec<StateVec> = Vec::with_capacity(s);
    let mut stage_times = Vec::with_capacity(s);
    for i in 0..s {
        let mut y = z.to_vec();
        for (j, aij) in tableau.a[i].iter().enumerate() {
            if *aij != 0.0 {
                vecops::axpy(&mut y, h * aij, &stage_derivs[j]);
            }
        }
        let ti = t + tableau.c[i] * h;
        let k = field.eval(ti, &y, theta);
        stage_times.push(ti);
        stage_states.push(StateVec(y));
        stage_derivs.push(k);
    }
    let mut next = z.to_vec();
    for (bi, k) in tableau.b.iter().zip(&stage_derivs) {
        vecops::axpy(&mut next, h * bi, k);
    }
    let record = StepRecord::Staged {
        input,
        t,
        h,
        tableau: tableau.clone(),
        startup,
        state_in: StateVec(z.to_vec()),
        stage_times,
        stage_states,
        stage_derivs,
    };
    (StateVec(next), record)
}

fn multistep_step(
    alphas: &[f64],
    betas: &[f64],
    states: &[StateVec],
    derivs: &[StateVec],
    first: usize,
    t: f64,
    h: f64,
) -> (StateVec, StepRecord) {
    let k = betas.len();
    let n = states[0].len();
    let mut acc = vec![0.0; n];
    for j in 0..k {
        vecops::axpy(&mut acc, h * betas[j], &derivs[j]);
        vecops::axpy(&mut acc, -alphas[j], &states[j]);
    }
    let inv = 1.0 / alphas[k];
    let next: Vec<f64> = acc.iter().map(|x| x * inv).collect();
    let record = StepRecord::Multistep {
        first,
        t,
        h,
        alphas: alphas.to_vec(),
        betas: betas.to_vec(),
        window_times: (0..k).map(|j| t + j as f64 * h).collect(),
        window_states: states.to_vec(),
        window_derivs: derivs.to_vec(),
    };
    (StateVec(next), record)
}

/// One step of `scheme` from the window of prior nodes starting at time `t`.
///
/// Staged schemes take a single state. Multistep schemes take the `K` prior
/// states; `derivs` supplies their `f` values, and when absent they are
/// evaluated at `t + j·h`.
pub fn step_once(
    field: &dyn VectorField,
    theta: &[f64],
    scheme: &Scheme,
    states: &[StateVec],
    derivs: Option<&[StateVec]>,
    t: f64,
    h: f64,
) -> Result<(StateVec, StepRecord)> {
    let window = scheme.window();
    if states.len() != window {
        return Err(Error::Window(format!(
            "scheme {scheme} needs {window} prior states, got {}",
            states.len()
        )));
    }
    let (next, record) = match scheme.kind() {
        SchemeKind::Staged(tab) => staged_step(field, theta, tab, &states[0], t, h, false, 0),
        SchemeKind::Multistep { alphas, betas, .. } => {
            let owned;
            let derivs = match derivs {
                Some(d) if d.len() == window => d,
                Some(d) => {
                    return Err(Error::Window(format!(
                        "scheme {scheme} needs {window} prior derivatives, got {}",
                        d.len()
                    )))
                }
                None => {
                    owned = states
                        .iter()
                        .enumerate()
                        .map(|(j, z)| field.eval(t + j as f64 * h, z, theta))
                        .collect::<Vec<_>>();
                    &owned[..]
                }
            };
            multistep_step(alphas, betas, states, derivs, 0, t, h)
        }
    };
    if !next.is_finite() {
        return Err(Error::NonFinite { step: 0 });
    }
    Ok((next, record))
}

/// Integrates `ż = f(t, z, θ)` over `grid`, recording every step.
pub fn solve_forward(
    field: &dyn VectorField,
    theta: &[f64],
    z0: &[f64],
    grid: &TimeGrid,
    scheme: &Scheme,
) -> Result<Trajectory> {
    let n_dim = field.dim_state();
    if z0.len() != n_dim {
        return Err(Error::Dimension { what: "initial state", expected: n_dim, got: z0.len() });
    }
    if theta.len() != field.dim_param() {
        return Err(Error::Dimension {
            what: "parameters",
            expected: field.dim_param(),
            got: theta.len(),
        });
    }
    if !z0.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite { step: 0 });
    }
    let n_steps = grid.n_steps();
    if n_steps < scheme.window() {
        return Err(Error::TooFewSteps { n_steps, needed: scheme.window() });
    }
    let h = grid.h();

    let mut states = Vec::with_capacity(n_steps + 1);
    let mut records = Vec::with_capacity(n_steps);
    states.push(StateVec(z0.to_vec()));

    match scheme.kind() {
        SchemeKind::Staged(tab) => {
            for n in 0..n_steps {
                let (next, rec) = staged_step(field, theta, tab, &states[n], grid.node(n), h, false, n);
                if !next.is_finite() {
                    return Err(Error::NonFinite { step: n });
                }
                states.push(next);
                records.push(rec);
            }
        }
        SchemeKind::Multistep { alphas, betas, startup } => {
            let k = betas.len();
            for n in 0..k - 1 {
                let (next, rec) =
                    staged_step(field, theta, startup, &states[n], grid.node(n), h, true, n);
                if !next.is_finite() {
                    return Err(Error::NonFinite { step: n });
                }
                states.push(next);
                records.push(rec);
            }
            let mut derivs: Vec<StateVec> = Vec::with_capacity(n_steps);
            for first in 0..=n_steps - k {
                while derivs.len() < first + k {
                    let m = derivs.len();
                    derivs.push(field.eval(grid.node(m), &states[m], theta));
                }
                let (next, rec) = multistep_step(
                    alphas,
                    betas,
                    &states[first..first + k],
                    &derivs[first..first + k],
                    first,
                    grid.node(first),
                    h,
                );
                if !next.is_finite() {
                    return Err(Error::NonFinite { step: first + k - 1 });
                }
                states.push(next);
                records.push(rec);
            }
        }
    }

    Ok(Trajectory { grid: *grid, scheme: scheme.clone(), theta: ParamVec(theta.to_vec()), states, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{make_grid, Covector};
    use crate::stats::fit_loglog;

    struct Linear;
    impl VectorField for Linear {
        fn dim_state(&self) -> usize {
            1
        }
        fn dim_param(&self) -> usize {
            1
        }
        fn eval(&self, _t: f64, z: &[f64], th: &[f64]) -> StateVec {
            StateVec(vec![th[0] * z[0]])
        }
        fn vjp_state(&self, _t: f64, _z: &[f64], th: &[f64], v: &[f64]) -> Covector {
            Covector(vec![th[0] * v[0]])
        }
        fn vjp_param(&self, _t: f64, z: &[f64], _th: &[f64], v: &[f64]) -> Covector {
            Covector(vec![z[0] * v[0]])
        }
    }

    struct Zero;
    impl VectorField for Zero {
        fn dim_state(&self) -> usize {
            1
        }
        fn dim_param(&self) -> usize {
            1
        }
        fn eval(&self, _t: f64, _z: &[f64], _th: &[f64]) -> StateVec {
            StateVec(vec![0.0])
        }
        fn vjp_state(&self, _t: f64, _z: &[f64], _th: &[f64], _v: &[f64]) -> Covector {
            Covector(vec![0.0])
        }
        fn vjp_param(&self, _t: f64, _z: &[f64], _th: &[f64], _v: &[f64]) -> Covector {
            Covector(vec![0.0])
        }
    }

    fn all_schemes() -> Vec<Scheme> {
        vec![Scheme::euler(), Scheme::heun(), Scheme::rk4(), Scheme::ab2()]
    }

    #[test]
    fn zero_field_keeps_state() {
        let grid = make_grid(0.0, 1.0, 10).unwrap();
        for s in all_schemes() {
            let traj = solve_forward(&Zero, &[3.0], &[1.0], &grid, &s).unwrap();
            assert!(traj.states.iter().all(|z| z.0 == vec![1.0]), "{s}");
        }
    }

    #[test]
    fn euler_hand_values() {
        let grid = make_grid(0.0, 1.0, 2).unwrap();
        let traj = solve_forward(&Linear, &[1.0], &[1.0], &grid, &Scheme::euler()).unwrap();
        let zs: Vec<f64> = traj.states.iter().map(|z| z[0]).collect();
        assert_eq!(zs, vec![1.0, 1.5, 2.25]);
    }

    #[test]
    fn rk4_single_step_is_truncated_exponential() {
        let grid = make_grid(0.0, 1.0, 1).unwrap();
        let traj = solve_forward(&Linear, &[1.0], &[1.0], &grid, &Scheme::rk4()).unwrap();
        let expected = 1.0 + 1.0 + 0.5 + 1.0 / 6.0 + 1.0 / 24.0;
        assert!((traj.final_state()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn rk4_fine_grid_matches_exponential() {
        let grid = make_grid(0.0, 1.0, 1000).unwrap();
        let traj = solve_forward(&Linear, &[1.0], &[1.0], &grid, &Scheme::rk4()).unwrap();
        assert!((traj.final_state()[0] - std::f64::consts::E).abs() <= 1e-10);
    }

    #[test]
    fn step_once_examples() {
        let (next, rec) =
            step_once(&Zero, &[0.0], &Scheme::euler(), &[StateVec(vec![4.0])], None, 0.0, 0.1).unwrap();
        assert_eq!(next.0, vec![4.0]);
        match rec {
            StepRecord::Staged { stage_derivs, .. } => assert_eq!(stage_derivs, vec![StateVec(vec![0.0])]),
            _ => panic!("expected staged record"),
        }

        let (next, _) =
            step_once(&Linear, &[2.0], &Scheme::euler(), &[StateVec(vec![1.0])], None, 0.0, 0.1).unwrap();
        assert!((next[0] - 1.2).abs() < 1e-15);

        let states = [StateVec(vec![7.0]), StateVec(vec![0.0])];
        let derivs = [StateVec(vec![1.0]), StateVec(vec![2.0])];
        let (next, _) =
            step_once(&Linear, &[0.0], &Scheme::ab2(), &states, Some(&derivs), 0.0, 1.0).unwrap();
        assert_eq!(next.0, vec![2.5]);
    }

    #[test]
    fn step_once_checks_window() {
        let err = step_once(&Linear, &[1.0], &Scheme::ab2(), &[StateVec(vec![1.0])], None, 0.0, 0.1);
        assert!(matches!(err, Err(Error::Window(_))));
    }

    #[test]
    fn multistep_needs_enough_steps() {
        let grid = make_grid(0.0, 1.0, 1).unwrap();
        assert!(matches!(
            solve_forward(&Linear, &[1.0], &[1.0], &grid, &Scheme::ab2()),
            Err(Error::TooFewSteps { .. })
        ));
    }

    #[test]
    fn non_finite_state_names_step() {
        let grid = make_grid(0.0, 1.0, 50).unwrap();
        let err = solve_forward(&Linear, &[1e300], &[1.0], &grid, &Scheme::euler()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { step: 1 }), "{err:?}");
    }

    #[test]
    fn scheme_invariants() {
        assert!(Scheme::multistep("bad", vec![1.0, 1.0], vec![1.0], 1).is_err());
        assert!(Scheme::multistep("bad", vec![-1.0, 0.0], vec![1.0], 1).is_err());
        assert!(Scheme::multistep("bad", vec![-1.0, 1.0], vec![1.0, 0.0], 1).is_err());
        let implicit = Tableau { a: vec![vec![0.5], vec![0.5, 0.5]], b: vec![0.5, 0.5], c: vec![0.5, 1.0] };
        assert!(Scheme::staged("implicit", implicit, 2).is_err());
        assert!("rk5".parse::<Scheme>().is_err());
        for name in Scheme::builtin_names() {
            let s: Scheme = name.parse().unwrap();
            assert_eq!(s.name(), *name);
            if let SchemeKind::Multistep { alphas, .. } = s.kind() {
                assert_eq!(alphas.iter().sum::<f64>(), 0.0);
            }
        }
    }

    #[test]
    fn euler_as_one_step_multistep_matches_staged_euler() {
        let ms = Scheme::multistep("euler-ms", vec![-1.0, 1.0], vec![1.0], 1).unwrap();
        let grid = make_grid(0.0, 1.0, 16).unwrap();
        let a = solve_forward(&Linear, &[0.7], &[1.3], &grid, &ms).unwrap();
        let b = solve_forward(&Linear, &[0.7], &[1.3], &grid, &Scheme::euler()).unwrap();
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn startup_steps_are_flagged() {
        let grid = make_grid(0.0, 1.0, 8).unwrap();
        let traj = solve_forward(&Linear, &[1.0], &[1.0], &grid, &Scheme::ab2()).unwrap();
        traj.check_records().unwrap();
        assert!(traj.records[0].is_startup());
        assert!(traj.records[1..].iter().all(|r| matches!(r, StepRecord::Multistep { .. })));
    }

    #[test]
    fn replay_is_bit_identical() {
        let grid = make_grid(0.0, 2.0, 13).unwrap();
        for s in all_schemes() {
            let traj = solve_forward(&Linear, &[0.9], &[0.4], &grid, &s).unwrap();
            for r in &traj.records {
                assert_eq!(r.replay(&Linear, &[0.9]), traj.states[r.output()], "{s}");
            }
        }
    }

    #[test]
    fn order_of_accuracy() {
        let hs: [f64; 5] = [0.1, 0.05, 0.025, 0.0125, 0.00625];
        for s in all_schemes() {
            let errs: Vec<f64> = hs
                .iter()
                .map(|h| {
                    let n = (1.0 / h).round() as usize;
                    let grid = make_grid(0.0, 1.0, n).unwrap();
                    let traj = solve_forward(&Linear, &[1.0], &[1.0], &grid, &s).unwrap();
                    (traj.final_state()[0] - std::f64::consts::E).abs()
                })
                .collect();
            let fit = fit_loglog(&hs, &errs).unwrap();
            assert!(
                (fit.slope - s.order() as f64).abs() <= 0.3,
                "{s}: slope {} vs order {}",
                fit.slope,
                s.order()
            );
        }
    }

    #[test]
    fn deterministic() {
        let grid = make_grid(0.0, 1.0, 40).unwrap();
        for s in all_schemes() {
            let a = solve_forward(&Linear, &[0.3], &[1.0], &grid, &s).unwrap();
            let b = solve_forward(&Linear, &[0.3], &[1.0], &grid, &s).unwrap();
            assert_eq!(a, b);
        }
    }
}
