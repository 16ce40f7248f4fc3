//! Concrete vector fields with analytic VJPs and dense Jacobians.

use crate::problem::{Covector, Jacobian, StateVec, VectorField};

/// `f = θ z`, N = P = 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearScalar;

impl VectorField for LinearScalar {
    fn dim_state(&self) -> usize {
        1
    }
    fn dim_param(&self) -> usize {
        1
    }
    fn eval(&self, _t: f64, z: &[f64], theta: &[f64]) -> StateVec {
        StateVec(vec![theta[0] * z[0]])
    }
    fn vjp_state(&self, _t: f64, _z: &[f64], theta: &[f64], v: &[f64]) -> Covector {
        Covector(vec![v[0] * theta[0]])
    }
    fn vjp_param(&self, _t: f64, z: &[f64], _theta: &[f64], v: &[f64]) -> Covector {
        Covector(vec![v[0] * z[0]])
    }
    fn jacobian_state(&self, _t: f64, _z: &[f64], theta: &[f64]) -> Option<Jacobian> {
        Some(Jacobian::from_row_major(1, 1, vec![theta[0]]))
    }
    fn jacobian_param(&self, _t: f64, z: &[f64], _theta: &[f64]) -> Option<Jacobian> {
        Some(Jacobian::from_row_major(1, 1, vec![z[0]]))
    }
}

/// `f = θ` (state independent), N = P = `dim`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantDrift {
    pub dim: usize,
}

impl VectorField for ConstantDrift {
    fn dim_state(&self) -> usize {
        self.dim
    }
    fn dim_param(&self) -> usize {
        self.dim
    }
    fn eval(&self, _t: f64, _z: &[f64], theta: &[f64]) -> StateVec {
        StateVec(theta.to_vec())
    }
    fn vjp_state(&self, _t: f64, _z: &[f64], _theta: &[f64], _v: &[f64]) -> Covector {
        Covector::zeros(self.dim)
    }
    fn vjp_param(&self, _t: f64, _z: &[f64], _theta: &[f64], v: &[f64]) -> Covector {
        Covector(v.to_vec())
    }
    fn jacobian_state(&self, _t: f64, _z: &[f64], _theta: &[f64]) -> Option<Jacobian> {
        Some(Jacobian::zeros(self.dim, self.dim))
    }
    fn jacobian_param(&self, _t: f64, _z: &[f64], _theta: &[f64]) -> Option<Jacobian> {
        let mut j = Jacobian::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            j.set(i, i, 1.0);
        }
        Some(j)
    }
}

/// `f = −z`; carries one parameter that the dynamics ignore (`f_θ ≡ 0`).
#[derive(Debug, Clone, Copy, Default)]
pub struct ParamFreeDecay;

impl VectorField for ParamFreeDecay {
    fn dim_state(&self) -> usize {
        1
    }
    fn dim_param(&self) -> usize {
        1
    }
    fn eval(&self, _t: f64, z: &[f64], _theta: &[f64]) -> StateVec {
        StateVec(vec![-z[0]])
    }
    fn vjp_state(&self, _t: f64, _z: &[f64], _theta: &[f64], v: &[f64]) -> Covector {
        Covector(vec![-v[0]])
    }
    fn vjp_param(&self, _t: f64, _z: &[f64], _theta: &[f64], _v: &[f64]) -> Covector {
        Covector(vec![0.0])
    }
    fn jacobian_state(&self, _t: f64, _z: &[f64], _theta: &[f64]) -> Option<Jacobian> {
        Some(Jacobian::from_row_major(1, 1, vec![-1.0]))
    }
    fn jacobian_param(&self, _t: f64, _z: &[f64], _theta: &[f64]) -> Option<Jacobian> {
        Some(Jacobian::zeros(1, 1))
    }
}

/// `f = A(θ) z` with `A` the row-major `n × n` reshape of `θ` (P = n²).
#[derive(Debug, Clone, Copy)]
pub struct LinearSystem {
    pub n: usize,
}

impl VectorField for LinearSystem {
    fn dim_state(&self) -> usize {
        self.n
    }
    fn dim_param(&self) -> usize {
        self.n * self.n
    }
    fn eval(&self, _t: f64, z: &[f64], theta: &[f64]) -> StateVec {
        let n = self.n;
        StateVec(
            (0..n)
                .map(|i| (0..n).map(|j| theta[i * n + j] * z[j]).sum())
                .collect(),
        )
    }
    fn vjp_state(&self, _t: f64, _z: &[f64], theta: &[f64], v: &[f64]) -> Covector {
        let n = self.n;
        Covector((0..n).map(|j| (0..n).map(|i| v[i] * theta[i * n + j]).sum()).collect())
    }
    fn vjp_param(&self, _t: f64, z: &[f64], _theta: &[f64], v: &[f64]) -> Covector {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = v[i] * z[j];
            }
        }
        Covector(out)
    }
    fn jacobian_state(&self, _t: f64, _z: &[f64], theta: &[f64]) -> Option<Jacobian> {
        Some(Jacobian::from_row_major(self.n, self.n, theta.to_vec()))
    }
    fn jacobian_param(&self, _t: f64, z: &[f64], _theta: &[f64]) -> Option<Jacobian> {
        let n = self.n;
        let mut j = Jacobian::zeros(n, n * n);
        for i in 0..n {
            for k in 0..n {
                j.set(i, i * n + k, z[k]);
            }
        }
        Some(j)
    }
}

/// `f = θ₁ z (1 − z/θ₂)`, N = 1, P = 2.
#[derive(Debug, Clone, Copy, Default)]
pub struct Logistic;

impl VectorField for Logistic {
    fn dim_state(&self) -> usize {
        1
    }
    fn dim_param(&self) -> usize {
        2
    }
    fn eval(&self, _t: f64, z: &[f64], theta: &[f64]) -> StateVec {
        let (r, k) = (theta[0], theta[1]);
        StateVec(vec![r * z[0] * (1.0 - z[0] / k)])
    }
    fn vjp_state(&self, _t: f64, z: &[f64], theta: &[f64], v: &[f64]) -> Covector {
        let (r, k) = (theta[0], theta[1]);
        Covector(vec![v[0] * r * (1.0 - 2.0 * z[0] / k)])
    }
    fn vjp_param(&self, _t: f64, z: &[f64], theta: &[f64], v: &[f64]) -> Covector {
        let (r, k) = (theta[0], theta[1]);
        let z = z[0];
        Covector(vec![v[0] * z * (1.0 - z / k), v[0] * r * z * z / (k * k)])
    }
    fn jacobian_state(&self, _t: f64, z: &[f64], theta: &[f64]) -> Option<Jacobian> {
        let (r, k) = (theta[0], theta[1]);
        Some(Jacobian::from_row_major(1, 1, vec![r * (1.0 - 2.0 * z[0] / k)]))
    }
    fn jacobian_param(&self, _t: f64, z: &[f64], theta: &[f64]) -> Option<Jacobian> {
        let (r, k) = (theta[0], theta[1]);
        let z = z[0];
        Some(Jacobian::from_row_major(1, 2, vec![z * (1.0 - z / k), r * z * z / (k * k)]))
    }
}
