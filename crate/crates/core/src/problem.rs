//! Shared domain types: state/parameter vectors, covectors, vector fields,
//! losses over labelled nodes and uniform time grids.
//!
//! Orientation convention: states are column vectors; adjoints and loss
//! gradients are row covectors that multiply Jacobians from the left. Every
//! gradient-like quantity in this crate is a [`Covector`].

use std::fmt;
use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! real_vector {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
        #[serde(transparent)]
        pub struct $name(pub Vec<f64>);

        impl $name {
            pub fn zeros(len: usize) -> Self {
                Self(vec![0.0; len])
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|x| x.is_finite())
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }

        impl From<&[f64]> for $name {
            fn from(v: &[f64]) -> Self {
                Self(v.to_vec())
            }
        }
    };
}

real_vector!(
    /// A point `z` in state space (column vector, length N).
    StateVec
);
real_vector!(
    /// Constant-in-time parameter vector `θ` (length P).
    ParamVec
);
real_vector!(
    /// Row vector. Adjoints, loss gradients and parameter gradients.
    Covector
);

/// Small dense-vector helpers used by the steppers.
pub(crate) mod vecops {
    pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
        debug_assert_eq!(y.len(), x.len());
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += a * xi;
        }
    }

    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    pub fn norm(a: &[f64]) -> f64 {
        a.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scaled(a: f64, x: &[f64]) -> Vec<f64> {
        x.iter().map(|xi| a * xi).collect()
    }
}

/// Relative discrepancy `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_discrepancy(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "relative_discrepancy: length mismatch");
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let num = vecops::norm(&diff);
    let den = vecops::norm(a).max(vecops::norm(b));
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Dense row-major matrix, used for optional Jacobians.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Jacobian {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "Jacobian::from_row_major: bad length");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// `A · u`
    pub fn mul_vec(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.cols);
        (0..self.rows)
            .map(|r| vecops::dot(&self.data[r * self.cols..(r + 1) * self.cols], u))
            .collect()
    }

    /// `v · A`
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, vr) in v.iter().enumerate() {
            vecops::axpy(&mut out, *vr, &self.data[r * self.cols..(r + 1) * self.cols]);
        }
        out
    }
}

/// Dynamics `ż = f(t, z, θ)` with left products against its Jacobians.
///
/// `vjp_state` returns `v · ∂f/∂z` (length N) and `vjp_param` returns
/// `v · ∂f/∂θ` (length P). Dense Jacobians are optional; only the tangent
/// pipeline needs them.
pub trait VectorField: Send + Sync {
    fn dim_state(&self) -> usize;
    fn dim_param(&self) -> usize;
    fn eval(&self, t: f64, z: &[f64], theta: &[f64]) -> StateVec;
    fn vjp_state(&self, t: f64, z: &[f64], theta: &[f64], v: &[f64]) -> Covector;
    fn vjp_param(&self, t: f64, z: &[f64], theta: &[f64], v: &[f64]) -> Covector;

    fn jacobian_state(&self, _t: f64, _z: &[f64], _theta: &[f64]) -> Option<Jacobian> {
        None
    }

    fn jacobian_param(&self, _t: f64, _z: &[f64], _theta: &[f64]) -> Option<Jacobian> {
        None
    }
}

impl<F: VectorField + ?Sized> VectorField for Arc<F> {
    fn dim_state(&self) -> usize {
        (**self).dim_state()
    }
    fn dim_param(&self) -> usize {
        (**self).dim_param()
    }
    fn eval(&self, t: f64, z: &[f64], theta: &[f64]) -> StateVec {
        (**self).eval(t, z, theta)
    }
    fn vjp_state(&self, t: f64, z: &[f64], theta: &[f64], v: &[f64]) -> Covector {
        (**self).vjp_state(t, z, theta, v)
    }
    fn vjp_param(&self, t: f64, z: &[f64], theta: &[f64], v: &[f64]) -> Covector {
        (**self).vjp_param(t, z, theta, v)
    }
    fn jacobian_state(&self, t: f64, z: &[f64], theta: &[f64]) -> Option<Jacobian> {
        (**self).jacobian_state(t, z, theta)
    }
    fn jacobian_param(&self, t: f64, z: &[f64], theta: &[f64]) -> Option<Jacobian> {
        (**self).jacobian_param(t, z, theta)
    }
}

/// Scalar loss over the states at the label times.
pub trait LabelLoss: Send + Sync + fmt::Debug {
    /// `states[i]` is `z(t_i)`.
    fn eval(&self, states: &[&[f64]]) -> f64;
    /// `∂L/∂z(t_i)`.
    fn grad(&self, index: usize, states: &[&[f64]]) -> Covector;
}

/// `L = Σ_i Σ_j z_j(t_i)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SumLoss;

impl LabelLoss for SumLoss {
    fn eval(&self, states: &[&[f64]]) -> f64 {
        states.iter().flat_map(|s| s.iter()).sum()
    }

    fn grad(&self, index: usize, states: &[&[f64]]) -> Covector {
        Covector(vec![1.0; states[index].len()])
    }
}

/// `L = Σ_i ½‖z(t_i) − target‖²` with one target shared by all labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SquaredErrorLoss {
    pub target: Vec<f64>,
}

impl LabelLoss for SquaredErrorLoss {
    fn eval(&self, states: &[&[f64]]) -> f64 {
        states
            .iter()
            .map(|s| {
                s.iter()
                    .zip(&self.target)
                    .map(|(z, y)| 0.5 * (z - y) * (z - y))
                    .sum::<f64>()
            })
            .sum()
    }

    fn grad(&self, index: usize, states: &[&[f64]]) -> Covector {
        Covector(states[index].iter().zip(&self.target).map(|(z, y)| z - y).collect())
    }
}

/// Loss `L(z(t_1), …, z(t_M))` with strictly ascending label times.
#[derive(Clone)]
pub struct LossSpec {
    label_times: Vec<f64>,
    form: Arc<dyn LabelLoss>,
}

impl fmt::Debug for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LossSpec")
            .field("label_times", &self.label_times)
            .field("form", &self.form)
            .finish()
    }
}

impl LossSpec {
    pub fn new(label_times: Vec<f64>, form: Arc<dyn LabelLoss>) -> Result<Self> {
        if label_times.is_empty() {
            return Err(Error::InvalidLoss("at least one label time is required".into()));
        }
        if label_times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidLoss("label times must be finite".into()));
        }
        if label_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidLoss("label times must be strictly ascending".into()));
        }
        Ok(Self { label_times, form })
    }

    /// Terminal-cost loss `L(z(t_end))`.
    pub fn terminal(t_end: f64, form: Arc<dyn LabelLoss>) -> Result<Self> {
        Self::new(vec![t_end], form)
    }

    pub fn label_times(&self) -> &[f64] {
        &self.label_times
    }

    pub fn num_labels(&self) -> usize {
        self.label_times.len()
    }

    pub fn form(&self) -> &Arc<dyn LabelLoss> {
        &self.form
    }

    pub fn eval(&self, states: &[&[f64]]) -> f64 {
        self.form.eval(states)
    }

    pub fn grad(&self, index: usize, states: &[&[f64]]) -> Covector {
        self.form.grad(index, states)
    }

    /// Grid node index of every label, rejecting labels off the node set or
    /// outside `(t0, t_end]`.
    pub fn label_nodes(&self, grid: &TimeGrid) -> Result<Vec<usize>> {
        self.label_times
            .iter()
            .map(|&t| {
                let n = grid.node_index(t)?;
                if n == 0 {
                    return Err(Error::InvalidLoss(format!(
                        "label time {t} must lie strictly after t0 = {}",
                        grid.t0()
                    )));
                }
                Ok(n)
            })
            .collect()
    }

    /// Loss evaluated on node states.
    pub fn eval_nodes<S: AsRef<[f64]>>(&self, states: &[S], nodes: &[usize]) -> f64 {
        let picked: Vec<&[f64]> = nodes.iter().map(|&n| states[n].as_ref()).collect();
        self.eval(&picked)
    }

    /// `∂L/∂z(t_i)` for every label, evaluated on node states.
    pub fn grads_nodes<S: AsRef<[f64]>>(&self, states: &[S], nodes: &[usize]) -> Vec<Covector> {
        let picked: Vec<&[f64]> = nodes.iter().map(|&n| states[n].as_ref()).collect();
        (0..nodes.len()).map(|i| self.grad(i, &picked)).collect()
    }
}

impl AsRef<[f64]> for StateVec {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for Covector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Absolute tolerance factor for matching times to grid nodes.
pub const NODE_TOLERANCE: f64 = 1e-12;

/// Uniform grid `t_n = t0 + n·h`, `n = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn h(&self) -> f64 {
        (self.t_end - self.t0) / self.n_steps as f64
    }

    /// The last node is pinned to `t_end` exactly.
    pub fn node(&self, n: usize) -> f64 {
        if n == self.n_steps {
            self.t_end
        } else {
            self.t0 + n as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|n| self.node(n)).collect()
    }

    pub fn node_index(&self, t: f64) -> Result<usize> {
        let span = self.t_end - self.t0;
        let k = ((t - self.t0) / self.h()).round();
        let k = k.clamp(0.0, self.n_steps as f64) as usize;
        let distance = (self.node(k) - t).abs();
        if distance <= NODE_TOLERANCE * span {
            Ok(k)
        } else {
            Err(Error::LabelOffGrid { time: t, nearest: self.node(k), distance })
        }
    }
}

/// Uniform grid with `h = (t_end − t0) / n_steps`.
pub fn make_grid(t0: f64, t_end: f64, n_steps: usize) -> Result<TimeGrid> {
    if !t0.is_finite() || !t_end.is_finite() {
        return Err(Error::InvalidGrid("endpoints must be finite".into()));
    }
    if t_end <= t0 {
        return Err(Error::InvalidGrid(format!("span must be positive, got [{t0}, {t_end}]")));
    }
    if n_steps == 0 {
        return Err(Error::InvalidGrid("n_steps must be at least 1".into()));
    }
    Ok(TimeGrid { t0, t_end, n_steps })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    VjpState,
    VjpParam,
    JacobianOrientation,
    LossGradient,
    LabelOffGrid,
    LabelOutOfRange,
    Dimension,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Where the probe was taken, human readable.
    pub location: String,
    pub abs_discrepancy: f64,
    pub rel_discrepancy: f64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub probes: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Relative tolerance for VJP and loss-gradient probes against central
/// differences.
pub const VALIDATION_RTOL: f64 = 1e-5;
/// Absolute floor below which probe discrepancies are ignored.
pub const VALIDATION_ATOL: f64 = 1e-8;
/// Tolerance for `v·J` against `vjp` when dense Jacobians are supplied.
pub const ORIENTATION_RTOL: f64 = 1e-12;
const PROBES: usize = 3;
const PROBE_SEED: u64 = 0x5eed_0de5;

fn central_difference<F>(x: &[f64], j: usize, mut g: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let eps = 1e-6 * (1.0 + x[j].abs());
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[j] += eps;
    xm[j] -= eps;
    let step = xp[j] - xm[j];
    let gp = g(&xp);
    let gm = g(&xm);
    gp.iter().zip(&gm).map(|(a, b)| (a - b) / step).collect()
}

fn compare(
    report: &mut ValidationReport,
    kind: ViolationKind,
    location: String,
    got: &[f64],
    reference: &[f64],
    rtol: f64,
) {
    let diff: Vec<f64> = got.iter().zip(reference).map(|(a, b)| a - b).collect();
    let abs = vecops::norm(&diff);
    let scale = vecops::norm(reference);
    let rel = if scale > 0.0 { abs / scale } else { abs };
    if !abs.is_finite() || (abs > VALIDATION_ATOL && rel > rtol) {
        report.violations.push(Violation {
            kind,
            location,
            abs_discrepancy: abs,
            rel_discrepancy: rel,
            message: format!("got {got:?}, reference {reference:?}"),
        });
    }
}

/// Probes the field's VJPs and optional Jacobians against central
/// differences around `(z0, θ)`, the loss gradient against differences of
/// the loss, and the label times against the grid. An empty report means
/// the problem is consistent.
pub fn validate_problem(
    field: &dyn VectorField,
    loss: &LossSpec,
    grid: &TimeGrid,
    theta: &[f64],
    z0: &[f64],
) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = field.dim_state();
    let p = field.dim_param();

    if z0.len() != n || theta.len() != p {
        report.violations.push(Violation {
            kind: ViolationKind::Dimension,
            location: "problem".into(),
            abs_discrepancy: f64::NAN,
            rel_discrepancy: f64::NAN,
            message: format!(
                "field declares N={n}, P={p}; got z0 of length {}, θ of length {}",
                z0.len(),
                theta.len()
            ),
        });
        return report;
    }
    if !z0.iter().chain(theta).all(|x| x.is_finite()) {
        report.violations.push(Violation {
            kind: ViolationKind::NonFinite,
            location: "problem".into(),
            abs_discrepancy: f64::NAN,
            rel_discrepancy: f64::NAN,
            message: "initial state or parameters contain non-finite entries".into(),
        });
        return report;
    }

    for &t in loss.label_times() {
        match grid.node_index(t) {
            Ok(0) => report.violations.push(Violation {
                kind: ViolationKind::LabelOutOfRange,
                location: format!("label t={t}"),
                abs_discrepancy: 0.0,
                rel_discrepancy: 0.0,
                message: "label off grid: label must lie strictly after t0".into(),
            }),
            Ok(_) => {}
            Err(Error::LabelOffGrid { nearest, distance, .. }) => {
                let out_of_range = t < grid.t0() || t > grid.t_end();
                report.violations.push(Violation {
                    kind: if out_of_range {
                        ViolationKind::LabelOutOfRange
                    } else {
                        ViolationKind::LabelOffGrid
                    },
                    location: format!("label t={t}"),
                    abs_discrepancy: distance,
                    rel_discrepancy: distance / (grid.t_end() - grid.t0()),
                    message: format!("label off grid: nearest node {nearest}"),
                })
            }
            Err(e) => report.violations.push(Violation {
                kind: ViolationKind::LabelOffGrid,
                location: format!("label t={t}"),
                abs_discrepancy: f64::NAN,
                rel_discrepancy: f64::NAN,
                message: e.to_string(),
            }),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    for probe in 0..PROBES {
        report.probes += 1;
        let t = grid.node(rng.gen_range(0..=grid.n_steps()));
        let z: Vec<f64> = z0.iter().map(|x| x + 0.1 * (1.0 + x.abs()) * rng.gen_range(-1.0..1.0)).collect();
        let th: Vec<f64> =
            theta.iter().map(|x| x + 0.05 * (1.0 + x.abs()) * rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let location = format!("probe {probe} at t={t}, z={z:?}, θ={th:?}");

        let fz = field.eval(t, &z, &th);
        if !fz.is_finite() {
            report.violations.push(Violation {
                kind: ViolationKind::NonFinite,
                location: location.clone(),
                abs_discrepancy: f64::NAN,
                rel_discrepancy: f64::NAN,
                message: "f evaluates to non-finite values".into(),
            });
            continue;
        }

        let vjp_z = field.vjp_state(t, &z, &th, &v);
        let fd_z: Vec<f64> = (0..n)
            .map(|j| {
                let col = central_difference(&z, j, |zz| field.eval(t, zz, &th).0);
                vecops::dot(&v, &col)
            })
            .collect();
        compare(&mut report, ViolationKind::VjpState, location.clone(), &vjp_z, &fd_z, VALIDATION_RTOL);

        let vjp_p = field.vjp_param(t, &z, &th, &v);
        let fd_p: Vec<f64> = (0..p)
            .map(|j| {
                let col = central_difference(&th, j, |tt| field.eval(t, &z, tt).0);
                vecops::dot(&v, &col)
            })
            .collect();
        compare(&mut report, ViolationKind::VjpParam, location.clone(), &vjp_p, &fd_p, VALIDATION_RTOL);

        if let Some(jz) = field.jacobian_state(t, &z, &th) {
            compare(
                &mut report,
                ViolationKind::JacobianOrientation,
                format!("{location} (∂f/∂z)"),
                &jz.left_mul(&v),
                &vjp_z,
                ORIENTATION_RTOL,
            );
        }
        if let Some(jp) = field.jacobian_param(t, &z, &th) {
            compare(
                &mut report,
                ViolationKind::JacobianOrientation,
                format!("{location} (∂f/∂θ)"),
                &jp.left_mul(&v),
                &vjp_p,
                ORIENTATION_RTOL,
            );
        }

        // Loss gradient probes on random states at the labels.
        let states: Vec<Vec<f64>> = (0..loss.num_labels())
            .map(|_| z0.iter().map(|x| x + 0.5 * (1.0 + x.abs()) * rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let refs: Vec<&[f64]> = states.iter().map(|s| s.as_slice()).collect();
        for i in 0..loss.num_labels() {
            let g = loss.grad(i, &refs);
            let fd: Vec<f64> = (0..n)
                .map(|j| {
                    central_difference(&states[i], j, |zi| {
                        let mut r = refs.clone();
                        r[i] = zi;
                        vec![loss.eval(&r)]
                    })[0]
                })
                .collect();
            compare(
                &mut report,
                ViolationKind::LossGradient,
                format!("probe {probe}, label {i}"),
                &g,
                &fd,
                VALIDATION_RTOL,
            );
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Zero;
    impl VectorField for Zero {
        fn dim_state(&self) -> usize {
            2
        }
        fn dim_param(&self) -> usize {
            1
        }
        fn eval(&self, _t: f64, _z: &[f64], _th: &[f64]) -> StateVec {
            StateVec::zeros(2)
        }
        fn vjp_state(&self, _t: f64, _z: &[f64], _th: &[f64], _v: &[f64]) -> Covector {
            Covector::zeros(2)
        }
        fn vjp_param(&self, _t: f64, _z: &[f64], _th: &[f64], _v: &[f64]) -> Covector {
            Covector::zeros(1)
        }
    }

    /// `f = θz` with a deliberately doubled state VJP.
    struct BadLinear;
    impl VectorField for BadLinear {
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
            Covector(vec![2.0 * th[0] * v[0]])
        }
        fn vjp_param(&self, _t: f64, z: &[f64], _th: &[f64], v: &[f64]) -> Covector {
            Covector(vec![z[0] * v[0]])
        }
    }

    #[test]
    fn grid_nodes() {
        assert_eq!(make_grid(0.0, 1.0, 4).unwrap().nodes(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(make_grid(0.0, 1.0, 1).unwrap().nodes(), vec![0.0, 1.0]);
        assert_eq!(make_grid(-1.0, 1.0, 2).unwrap().nodes(), vec![-1.0, 0.0, 1.0]);
        let g = make_grid(0.0, 1.0, 4).unwrap();
        assert_eq!(g.h(), 0.25);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(matches!(make_grid(1.0, 1.0, 4), Err(Error::InvalidGrid(_))));
        assert!(matches!(make_grid(1.0, 0.0, 4), Err(Error::InvalidGrid(_))));
        assert!(matches!(make_grid(0.0, 1.0, 0), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn node_lookup() {
        let g = make_grid(0.0, 1.0, 10).unwrap();
        assert_eq!(g.node_index(0.3).unwrap(), 3);
        assert_eq!(g.node_index(1.0).unwrap(), 10);
        assert!(matches!(g.node_index(0.15), Err(Error::LabelOffGrid { .. })));
    }

    #[test]
    fn loss_rejects_unsorted_labels() {
        assert!(LossSpec::new(vec![0.5, 0.5], Arc::new(SumLoss)).is_err());
        assert!(LossSpec::new(vec![], Arc::new(SumLoss)).is_err());
        assert!(LossSpec::new(vec![0.7, 0.5], Arc::new(SumLoss)).is_err());
    }

    #[test]
    fn zero_field_validates_clean() {
        let grid = make_grid(0.0, 2.0, 7).unwrap();
        let loss = LossSpec::terminal(2.0, Arc::new(SumLoss)).unwrap();
        let report = validate_problem(&Zero, &loss, &grid, &[0.4], &[1.0, -2.0]);
        assert!(report.is_valid(), "{report:?}");
    }

    #[test]
    fn off_grid_label_is_reported() {
        let grid = make_grid(0.0, 1.0, 10).unwrap();
        let loss = LossSpec::new(vec![0.15, 1.0], Arc::new(SumLoss)).unwrap();
        let report = validate_problem(&Zero, &loss, &grid, &[0.0], &[1.0, 1.0]);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].kind, ViolationKind::LabelOffGrid);
        assert!(report.violations[0].message.contains("label off grid"));
    }

    #[test]
    fn label_at_t0_is_out_of_range() {
        let grid = make_grid(0.0, 1.0, 10).unwrap();
        let loss = LossSpec::new(vec![0.0, 1.0], Arc::new(SumLoss)).unwrap();
        assert!(loss.label_nodes(&grid).is_err());
        let report = validate_problem(&Zero, &loss, &grid, &[0.0], &[1.0, 1.0]);
        assert_eq!(report.violations[0].kind, ViolationKind::LabelOutOfRange);
    }

    #[test]
    fn wrong_vjp_is_reported_with_unit_relative_discrepancy() {
        let grid = make_grid(0.0, 1.0, 10).unwrap();
        let loss = LossSpec::terminal(1.0, Arc::new(SumLoss)).unwrap();
        let report = validate_problem(&BadLinear, &loss, &grid, &[0.7], &[1.0]);
        let state: Vec<_> =
            report.violations.iter().filter(|v| v.kind == ViolationKind::VjpState).collect();
        assert_eq!(state.len(), PROBES);
        for v in state {
            // |2θv − θv| / |θv| = 1
            assert!((v.rel_discrepancy - 1.0).abs() < 1e-6, "{v:?}");
        }
        assert!(report.violations.iter().all(|v| v.kind == ViolationKind::VjpState));
    }

    #[test]
    fn squared_error_gradient() {
        let loss = SquaredErrorLoss { target: vec![1.0, 2.0] };
        let s = [3.0, 0.0];
        assert_eq!(loss.eval(&[&s]), 0.5 * (4.0 + 4.0));
        assert_eq!(loss.grad(0, &[&s]).0, vec![2.0, -2.0]);
    }

    #[test]
    fn jacobian_products_agree() {
        let j = Jacobian::from_row_major(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let v = [1.0, -1.0];
        let u = [0.5, 0.25, 2.0];
        let lhs = vecops::dot(&j.left_mul(&v), &u);
        let rhs = vecops::dot(&v, &j.mul_vec(&u));
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn relative_discrepancy_handles_zero() {
        assert_eq!(relative_discrepancy(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((relative_discrepancy(&[1.0], &[2.0]) - 0.5).abs() < 1e-15);
    }
}
