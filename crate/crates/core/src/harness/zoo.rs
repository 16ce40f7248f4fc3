//! Named test problems and their randomized instances.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{ConstantDrift, LinearScalar, LinearSystem, Logistic, ParamFreeDecay};
use crate::problem::{LabelLoss, LossSpec, SquaredErrorLoss, SumLoss, VectorField};

/// A vector field family with its structural size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "field", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    /// `f = θ z`
    LinearScalar,
    /// `f = A(θ) z`, `A` the row-major `n × n` reshape of `θ`
    LinearSystem { n: usize },
    /// `f = θ₁ z (1 − z/θ₂)`
    Logistic,
    /// `f = θ`
    ConstantDrift { dim: usize },
    /// `f = −z`, one ignored parameter
    ParamFreeDecay,
}

impl FieldSpec {
    pub fn build(&self) -> Result<Arc<dyn VectorField>> {
        Ok(match *self {
            FieldSpec::LinearScalar => Arc::new(LinearScalar),
            FieldSpec::LinearSystem { n } if n > 0 => Arc::new(LinearSystem { n }),
            FieldSpec::Logistic => Arc::new(Logistic),
            FieldSpec::ConstantDrift { dim } if dim > 0 => Arc::new(ConstantDrift { dim }),
            FieldSpec::ParamFreeDecay => Arc::new(ParamFreeDecay),
            _ => return Err(Error::InvalidArgument(format!("field {self:?} has zero dimension"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LossForm {
    /// `Σ_i Σ_k z_k(t_i)`
    Sum,
    /// `½ Σ_i ‖z(t_i) − target‖²`
    SquaredError { target: Vec<f64> },
}

/// Loss at a list of label times; an empty list means the final time only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossDescriptor {
    #[serde(default)]
    pub labels: Vec<f64>,
    pub form: LossForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: String,
    pub field: FieldSpec,
    pub theta: Vec<f64>,
    pub z0: Vec<f64>,
    pub t0: f64,
    pub t_end: f64,
    pub loss: LossDescriptor,
}

/// A problem ready to run.
#[derive(Clone)]
pub struct ResolvedProblem {
    pub field: Arc<dyn VectorField>,
    pub loss: LossSpec,
}

impl ProblemSpec {
    /// Builds the field and loss, checking every dimension against the field.
    pub fn resolve(&self) -> Result<ResolvedProblem> {
        let field = self.field.build()?;
        let (n, p) = (field.dim_state(), field.dim_param());
        if self.theta.len() != p {
            return Err(Error::Dimension { what: "theta", expected: p, got: self.theta.len() });
        }
        if self.z0.len() != n {
            return Err(Error::Dimension { what: "z0", expected: n, got: self.z0.len() });
        }
        if self.theta.iter().chain(&self.z0).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("{}: theta and z0 must be finite", self.name)));
        }
        if self.t_end.is_nan() || self.t0.is_nan() || self.t_end <= self.t0 {
            return Err(Error::InvalidGrid(format!("t_end {} must exceed t0 {}", self.t_end, self.t0)));
        }
        let form: Arc<dyn LabelLoss> = match &self.loss.form {
            LossForm::Sum => Arc::new(SumLoss),
            LossForm::SquaredError { target } => {
                if target.len() != n {
                    return Err(Error::Dimension { what: "loss target", expected: n, got: target.len() });
                }
                Arc::new(SquaredErrorLoss { target: target.clone() })
            }
        };
        let loss = if self.loss.labels.is_empty() {
            LossSpec::terminal(self.t_end, form)?
        } else {
            if self.loss.labels.iter().any(|&t| t <= self.t0 || t > self.t_end) {
                return Err(Error::InvalidLoss(format!(
                    "label times must lie in ({}, {}]",
                    self.t0, self.t_end
                )));
            }
            LossSpec::new(self.loss.labels.clone(), form)?
        };
        Ok(ResolvedProblem { field, loss })
    }

    /// A nearby instance: each entry of `θ` and `z0` is scaled by up to ±20%
    /// and shifted by up to ±0.05.
    pub fn perturbed(&self, rng: &mut ChaCha8Rng) -> ProblemSpec {
        let mut jiggle = |x: f64| x * (1.0 + 0.2 * rng.gen_range(-1.0..=1.0)) + 0.05 * rng.gen_range(-1.0..=1.0);
        let theta = self.theta.iter().map(|&x| jiggle(x)).collect();
        let z0 = self.z0.iter().map(|&x| jiggle(x)).collect();
        ProblemSpec { theta, z0, ..self.clone() }
    }
}

/// Zoo names with one-line descriptions, in listing order.
pub const ZOO: &[(&str, &str)] = &[
    ("linear-scalar", "f = θz, θ = 0.3, z0 = 1, T = 1, L = z(T)"),
    ("linear-system", "f = A(θ)z, N = 3, P = 9, L = ½‖z(T) − target‖²"),
    ("logistic", "f = θ1 z(1 − z/θ2), θ = (1.5, 2), z0 = 0.5, L = z(T)"),
    ("bilinear-2d", "f = Wz, W = reshape(θ), θ = (−10, 1, 0.5, −1), eigenvalues ≈ −10, −1, L = ½‖z(T)‖²"),
    ("multilabel-linear", "f = θz, θ = 0, labels at t = 0.5 and 1, L = z(0.5) + z(1)"),
    ("param-free-decay", "f = −z with an unused parameter, gradient ≡ 0"),
    ("constant-drift", "f = θ, N = P = 2, L = Σ z(T)"),
];

pub fn zoo_names() -> impl Iterator<Item = &'static str> {
    ZOO.iter().map(|(n, _)| *n)
}

pub fn zoo(name: &str) -> Result<ProblemSpec> {
    let terminal_sum = LossDescriptor { labels: Vec::new(), form: LossForm::Sum };
    let spec = |field, theta: Vec<f64>, z0: Vec<f64>, loss| ProblemSpec {
        name: name.to_string(),
        field,
        theta,
        z0,
        t0: 0.0,
        t_end: 1.0,
        loss,
    };
    Ok(match name {
        "linear-scalar" => spec(FieldSpec::LinearScalar, vec![0.3], vec![1.0], terminal_sum),
        "linear-system" => spec(
            FieldSpec::LinearSystem { n: 3 },
            vec![-0.5, 0.3, 0.0, -0.2, -0.4, 0.6, 0.1, -0.3, -0.2],
            vec![1.0, -0.5, 0.25],
            LossDescriptor { labels: Vec::new(), form: LossForm::SquaredError { target: vec![0.5, 0.0, -0.5] } },
        ),
        "logistic" => spec(FieldSpec::Logistic, vec![1.5, 2.0], vec![0.5], terminal_sum),
        "bilinear-2d" => spec(
            FieldSpec::LinearSystem { n: 2 },
            vec![-10.0, 1.0, 0.5, -1.0],
            vec![1.0, 1.0],
            LossDescriptor { labels: Vec::new(), form: LossForm::SquaredError { target: vec![0.0, 0.0] } },
        ),
        "multilabel-linear" => spec(
            FieldSpec::LinearScalar,
            vec![0.0],
            vec![1.0],
            LossDescriptor { labels: vec![0.5, 1.0], form: LossForm::Sum },
        ),
        "param-free-decay" => spec(FieldSpec::ParamFreeDecay, vec![0.5], vec![1.0], terminal_sum),
        "constant-drift" => spec(FieldSpec::ConstantDrift { dim: 2 }, vec![0.3, -0.7], vec![1.0, 2.0], terminal_sum),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "unknown zoo problem `{name}` (known: {})",
                zoo_names().collect::<Vec<_>>().join(", ")
            )))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{make_grid, validate_problem};
    use rand::SeedableRng;

    #[test]
    fn every_zoo_problem_resolves_and_validates() {
        for name in zoo_names() {
            let spec = zoo(name).unwrap();
            let r = spec.resolve().unwrap();
            let grid = make_grid(spec.t0, spec.t_end, 32).unwrap();
            let report = validate_problem(r.field.as_ref(), &r.loss, &grid, &spec.theta, &spec.z0);
            assert!(report.is_valid(), "{name}: {report:#?}");
        }
    }

    #[test]
    fn sizes() {
        let r = zoo("linear-scalar").unwrap().resolve().unwrap();
        assert_eq!((r.field.dim_state(), r.field.dim_param()), (1, 1));
        let r = zoo("linear-system").unwrap().resolve().unwrap();
        assert_eq!((r.field.dim_state(), r.field.dim_param()), (3, 9));
        let r = zoo("bilinear-2d").unwrap().resolve().unwrap();
        assert_eq!((r.field.dim_state(), r.field.dim_param()), (2, 4));
        assert!(zoo("nope").is_err());
    }

    #[test]
    fn perturbation_is_seeded() {
        let spec = zoo("logistic").unwrap();
        let a = spec.perturbed(&mut ChaCha8Rng::seed_from_u64(7));
        let b = spec.perturbed(&mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
        assert_ne!(a.theta, spec.theta);
        assert!(a.theta[1] > 0.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut spec = zoo("linear-system").unwrap();
        spec.z0.pop();
        assert!(matches!(spec.resolve(), Err(Error::Dimension { what: "z0", .. })));
    }
}
