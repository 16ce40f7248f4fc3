//! Experiment configuration: a versioned TOML document.
//!
//! ```toml
//! schema_version = 1
//! seed = 42
//!
//! [[experiment]]
//! name = "rk4-vs-euler"
//! problem = { zoo = "linear-scalar" }
//! forward_scheme = "rk4"
//! grids = [10, 20, 40]
//! methods = [
//!   { kind = "backprop" },
//!   { kind = "continuous_adjoint", backward_scheme = "euler" },
//! ]
//! assert = [
//!   { kind = "slope", method = "continuous_adjoint[euler]", expected = 1.0, tolerance = 0.3 },
//! ]
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::continuous::QuadratureRule;
use crate::harness::zoo::{zoo, FieldSpec, LossDescriptor, LossForm, ProblemSpec};
use crate::schemes::Scheme;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{path}: {message}")]
    Field { path: String, message: String },
}

fn field_err(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { path: path.into(), message: message.into() }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSuite {
    schema_version: u32,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    experiment: Vec<RawExperiment>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    #[serde(default)]
    name: Option<String>,
    problem: RawProblem,
    forward_scheme: String,
    grids: Vec<usize>,
    methods: Vec<RawMethod>,
    #[serde(default)]
    draws: usize,
    #[serde(default, rename = "assert")]
    assertions: Vec<Assertion>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    zoo: Option<String>,
    inline: Option<FieldSpec>,
    theta: Option<Vec<f64>>,
    z0: Option<Vec<f64>>,
    t0: Option<f64>,
    t_end: Option<f64>,
    labels: Option<Vec<f64>>,
    loss: Option<LossForm>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMethod {
    kind: MethodKind,
    label: Option<String>,
    backward_scheme: Option<String>,
    quadrature: Option<String>,
    epsilon: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    ContinuousAdjoint,
    ContinuousAdjointHardReset,
    DiscreteAdjoint,
    Backprop,
    Fd,
    Tangent,
}

impl MethodKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodKind::ContinuousAdjoint => "continuous_adjoint",
            MethodKind::ContinuousAdjointHardReset => "continuous_adjoint_hard_reset",
            MethodKind::DiscreteAdjoint => "discrete_adjoint",
            MethodKind::Backprop => "backprop",
            MethodKind::Fd => "fd",
            MethodKind::Tangent => "tangent",
        }
    }

    pub fn is_continuous(self) -> bool {
        matches!(self, MethodKind::ContinuousAdjoint | MethodKind::ContinuousAdjointHardReset)
    }
}

/// One gradient method, fully resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSpec {
    pub label: String,
    pub kind: MethodKind,
    /// Continuous methods only.
    pub backward_scheme: Option<Scheme>,
    /// Continuous methods only.
    pub quadrature: Option<QuadratureRule>,
    /// Finite differences only.
    pub epsilon: Option<f64>,
}

pub const FD_FINEST: &str = "fd-finest";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Assertion {
    /// Relative discrepancy between two methods at most `max` on every
    /// instance and every listed grid (all grids when omitted).
    MaxDiscrepancy {
        method: String,
        reference: String,
        max: f64,
        #[serde(default)]
        grids: Option<Vec<usize>>,
    },
    /// Relative discrepancy at least `min` on the given grid (coarsest when
    /// omitted), on every instance.
    MinDiscrepancy {
        method: String,
        reference: String,
        min: f64,
        #[serde(default)]
        grid: Option<usize>,
    },
    /// Fitted log-log slope of `method`'s discrepancy against `reference`
    /// (a method label, or `fd-finest`) within `expected ± tolerance`.
    Slope {
        method: String,
        #[serde(default = "default_reference")]
        reference: String,
        expected: f64,
        tolerance: f64,
    },
    /// Gradient within relative `rtol` of `value` on the listed grids
    /// (absolute when `value` is zero).
    CloseTo {
        method: String,
        value: Vec<f64>,
        rtol: f64,
        #[serde(default)]
        grids: Option<Vec<usize>>,
    },
}

fn default_reference() -> String {
    "backprop".to_string()
}

impl Assertion {
    pub fn describe(&self) -> String {
        match self {
            Assertion::MaxDiscrepancy { method, reference, max, .. } => {
                format!("discrepancy({method}, {reference}) <= {max:e}")
            }
            Assertion::MinDiscrepancy { method, reference, min, grid } => match grid {
                Some(g) => format!("discrepancy({method}, {reference}) >= {min:e} at n={g}"),
                None => format!("discrepancy({method}, {reference}) >= {min:e} at coarsest grid"),
            },
            Assertion::Slope { method, reference, expected, tolerance } => {
                format!("slope({method} vs {reference}) = {expected} ± {tolerance}")
            }
            Assertion::CloseTo { method, value, rtol, .. } => format!("{method} ≈ {value:?} (rtol {rtol:e})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub problem: ProblemSpec,
    pub forward_scheme: Scheme,
    pub grids: Vec<usize>,
    pub methods: Vec<MethodSpec>,
    /// Random instances in addition to the nominal one.
    pub draws: usize,
    pub assertions: Vec<Assertion>,
}

impl ExperimentSpec {
    pub fn method(&self, label: &str) -> Option<&MethodSpec> {
        self.methods.iter().find(|m| m.label == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub experiments: Vec<ExperimentSpec>,
}

pub const DEFAULT_SEED: u64 = 0;

impl SuiteConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawSuite = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if raw.schema_version != SCHEMA_VERSION {
            return Err(field_err(
                "schema_version",
                format!("unsupported version {} (this build reads {SCHEMA_VERSION})", raw.schema_version),
            ));
        }
        let mut names = BTreeSet::new();
        let mut experiments = Vec::with_capacity(raw.experiment.len());
        for (i, e) in raw.experiment.into_iter().enumerate() {
            let spec = resolve_experiment(&format!("experiment[{i}]"), i, e)?;
            if !names.insert(spec.name.clone()) {
                return Err(field_err(format!("experiment[{i}].name"), format!("duplicate name `{}`", spec.name)));
            }
            experiments.push(spec);
        }
        Ok(SuiteConfig { schema_version: raw.schema_version, seed: raw.seed.unwrap_or(DEFAULT_SEED), experiments })
    }
}

fn resolve_experiment(path: &str, index: usize, raw: RawExperiment) -> Result<ExperimentSpec, ConfigError> {
    let name = raw.name.unwrap_or_else(|| format!("experiment-{index}"));
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        return Err(field_err(format!("{path}.name"), "use letters, digits, `-` and `_` only"));
    }
    let problem = resolve_problem(&format!("{path}.problem"), raw.problem)?;
    let resolved = problem.resolve().map_err(|e| field_err(format!("{path}.problem"), e.to_string()))?;

    let forward_scheme: Scheme =
        raw.forward_scheme.parse().map_err(|e: crate::Error| field_err(format!("{path}.forward_scheme"), e.to_string()))?;

    if raw.grids.is_empty() {
        return Err(field_err(format!("{path}.grids"), "at least one grid is required"));
    }
    let mut seen = BTreeSet::new();
    for (g, &n) in raw.grids.iter().enumerate() {
        let gpath = format!("{path}.grids[{g}]");
        if n < forward_scheme.window() {
            return Err(field_err(gpath, format!("{n} steps is too few for {}", forward_scheme.name())));
        }
        if !seen.insert(n) {
            return Err(field_err(gpath, format!("duplicate grid {n}")));
        }
        let grid = crate::problem::make_grid(problem.t0, problem.t_end, n).map_err(|e| field_err(&gpath, e.to_string()))?;
        resolved.loss.label_nodes(&grid).map_err(|e| field_err(&gpath, e.to_string()))?;
    }

    if raw.methods.is_empty() {
        return Err(field_err(format!("{path}.methods"), "at least one method is required"));
    }
    let mut methods = Vec::with_capacity(raw.methods.len());
    let mut labels = BTreeSet::new();
    for (m, rm) in raw.methods.into_iter().enumerate() {
        let mpath = format!("{path}.methods[{m}]");
        let spec = resolve_method(&mpath, rm, &forward_scheme)?;
        if spec.label == FD_FINEST || !labels.insert(spec.label.clone()) {
            return Err(field_err(format!("{mpath}.label"), format!("label `{}` is reserved or already used", spec.label)));
        }
        methods.push(spec);
    }

    for (a, assertion) in raw.assertions.iter().enumerate() {
        check_assertion(&format!("{path}.assert[{a}]"), assertion, &methods, &raw.grids)?;
    }

    Ok(ExperimentSpec {
        name,
        problem,
        forward_scheme,
        grids: raw.grids,
        methods,
        draws: raw.draws,
        assertions: raw.assertions,
    })
}

fn resolve_problem(path: &str, raw: RawProblem) -> Result<ProblemSpec, ConfigError> {
    let mut spec = match (raw.zoo, raw.inline) {
        (Some(name), None) => zoo(&name).map_err(|e| field_err(format!("{path}.zoo"), e.to_string()))?,
        (None, Some(field)) => {
            let theta = raw.theta.clone().ok_or_else(|| field_err(format!("{path}.theta"), "required for inline problems"))?;
            let z0 = raw.z0.clone().ok_or_else(|| field_err(format!("{path}.z0"), "required for inline problems"))?;
            ProblemSpec {
                name: "inline".into(),
                field,
                theta,
                z0,
                t0: 0.0,
                t_end: 1.0,
                loss: LossDescriptor { labels: Vec::new(), form: LossForm::Sum },
            }
        }
        (Some(_), Some(_)) => return Err(field_err(path, "give either `zoo` or `inline`, not both")),
        (None, None) => return Err(field_err(path, "one of `zoo` or `inline` is required")),
    };
    if let Some(theta) = raw.theta {
        spec.theta = theta;
    }
    if let Some(z0) = raw.z0 {
        spec.z0 = z0;
    }
    if let Some(t0) = raw.t0 {
        spec.t0 = t0;
    }
    if let Some(t_end) = raw.t_end {
        spec.t_end = t_end;
    }
    if let Some(labels) = raw.labels {
        spec.loss.labels = labels;
    }
    if let Some(form) = raw.loss {
        spec.loss.form = form;
    }
    Ok(spec)
}

fn resolve_method(path: &str, raw: RawMethod, forward: &Scheme) -> Result<MethodSpec, ConfigError> {
    let kind = raw.kind;
    if !kind.is_continuous() {
        if raw.backward_scheme.is_some() {
            return Err(field_err(
                format!("{path}.backward_scheme"),
                format!("`{}` reverses the forward discretization and takes no backward scheme", kind.as_str()),
            ));
        }
        if raw.quadrature.is_some() {
            return Err(field_err(format!("{path}.quadrature"), format!("`{}` takes no quadrature rule", kind.as_str())));
        }
    }
    if kind != MethodKind::Fd && raw.epsilon.is_some() {
        return Err(field_err(format!("{path}.epsilon"), "only `fd` takes an epsilon"));
    }

    let (backward_scheme, quadrature) = if kind.is_continuous() {
        let scheme = match &raw.backward_scheme {
            Some(s) => s.parse().map_err(|e: crate::Error| field_err(format!("{path}.backward_scheme"), e.to_string()))?,
            None => forward.clone(),
        };
        let rule = match &raw.quadrature {
            Some(q) => q.parse().map_err(|e: crate::Error| field_err(format!("{path}.quadrature"), e.to_string()))?,
            None => QuadratureRule::default(),
        };
        (Some(scheme), Some(rule))
    } else {
        (None, None)
    };
    let epsilon = if kind == MethodKind::Fd {
        let eps = raw.epsilon.unwrap_or(crate::backprop::DEFAULT_FD_EPSILON);
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(field_err(format!("{path}.epsilon"), "must be positive and finite"));
        }
        Some(eps)
    } else {
        None
    };

    let label = raw.label.unwrap_or_else(|| match &backward_scheme {
        Some(s) => format!("{}[{}]", kind.as_str(), s.name()),
        None => kind.as_str().to_string(),
    });
    Ok(MethodSpec { label, kind, backward_scheme, quadrature, epsilon })
}

fn check_assertion(path: &str, a: &Assertion, methods: &[MethodSpec], grids: &[usize]) -> Result<(), ConfigError> {
    let known = |field: &str, label: &str, allow_fd_finest: bool| -> Result<(), ConfigError> {
        if allow_fd_finest && label == FD_FINEST {
            return if methods.iter().any(|m| m.kind == MethodKind::Fd) {
                Ok(())
            } else {
                Err(field_err(format!("{path}.{field}"), "`fd-finest` needs an `fd` method in the experiment"))
            };
        }
        if methods.iter().any(|m| m.label == label) {
            Ok(())
        } else {
            Err(field_err(format!("{path}.{field}"), format!("no method labelled `{label}`")))
        }
    };
    let grid_ok = |field: &str, g: usize| {
        if grids.contains(&g) {
            Ok(())
        } else {
            Err(field_err(format!("{path}.{field}"), format!("grid {g} is not in the sweep")))
        }
    };
    match a {
        Assertion::MaxDiscrepancy { method, reference, max, grids: gs } => {
            known("method", method, false)?;
            known("reference", reference, false)?;
            if max.is_nan() || *max < 0.0 {
                return Err(field_err(format!("{path}.max"), "must be non-negative"));
            }
            for g in gs.iter().flatten() {
                grid_ok("grids", *g)?;
            }
        }
        Assertion::MinDiscrepancy { method, reference, grid, .. } => {
            known("method", method, false)?;
            known("reference", reference, false)?;
            if let Some(g) = grid {
                grid_ok("grid", *g)?;
            }
        }
        Assertion::Slope { method, reference, tolerance, .. } => {
            known("method", method, false)?;
            known("reference", reference, true)?;
            if grids.len() < 2 {
                return Err(field_err(format!("{path}.method"), "a slope needs at least two grids"));
            }
            if tolerance.is_nan() || *tolerance < 0.0 {
                return Err(field_err(format!("{path}.tolerance"), "must be non-negative"));
            }
        }
        Assertion::CloseTo { method, rtol, grids: gs, .. } => {
            known("method", method, false)?;
            if rtol.is_nan() || *rtol < 0.0 {
                return Err(field_err(format!("{path}.rtol"), "must be non-negative"));
            }
            for g in gs.iter().flatten() {
                grid_ok("grids", *g)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
schema_version = 1

[[experiment]]
name = "basic"
problem = { zoo = "linear-scalar" }
forward_scheme = "rk4"
grids = [10, 20]
methods = [
  { kind = "backprop" },
  { kind = "discrete_adjoint" },
  { kind = "continuous_adjoint", backward_scheme = "euler" },
  { kind = "fd", epsilon = 1e-7 },
]
assert = [
  { kind = "max_discrepancy", method = "discrete_adjoint", reference = "backprop", max = 1e-12 },
  { kind = "slope", method = "continuous_adjoint[euler]", expected = 1.0, tolerance = 0.3 },
]
"#;

    #[test]
    fn parses_basic_suite() {
        let cfg = SuiteConfig::parse(BASIC).unwrap();
        assert_eq!(cfg.seed, DEFAULT_SEED);
        let e = &cfg.experiments[0];
        assert_eq!(e.grids, vec![10, 20]);
        let ca = e.method("continuous_adjoint[euler]").unwrap();
        assert_eq!(ca.backward_scheme, Some(Scheme::euler()));
        assert_eq!(ca.quadrature, Some(QuadratureRule::SchemeMatched));
        assert_eq!(e.method("fd").unwrap().epsilon, Some(1e-7));
        assert_eq!(e.assertions.len(), 2);
    }

    #[test]
    fn empty_suite_is_valid() {
        let cfg = SuiteConfig::parse("schema_version = 1\n").unwrap();
        assert!(cfg.experiments.is_empty());
    }

    fn field_path(text: &str) -> String {
        match SuiteConfig::parse(text).unwrap_err() {
            ConfigError::Field { path, .. } => path,
            other => panic!("expected a field error, got {other}"),
        }
    }

    #[test]
    fn backward_scheme_on_transpose_methods_names_the_field() {
        for kind in ["discrete_adjoint", "backprop", "fd", "tangent"] {
            let text = BASIC.replace(
                r#"{ kind = "discrete_adjoint" }"#,
                &format!(r#"{{ kind = "{kind}", label = "x", backward_scheme = "rk4" }}"#),
            );
            assert_eq!(field_path(&text), "experiment[0].methods[1].backward_scheme", "{kind}");
        }
    }

    #[test]
    fn field_errors() {
        assert_eq!(field_path(&BASIC.replace("schema_version = 1", "schema_version = 9")), "schema_version");
        assert_eq!(field_path(&BASIC.replace("\"rk4\"", "\"rk5\"")), "experiment[0].forward_scheme");
        assert_eq!(field_path(&BASIC.replace("linear-scalar", "nope")), "experiment[0].problem.zoo");
        assert_eq!(field_path(&BASIC.replace("max = 1e-12", "max = 1e-12, grids = [30]")), "experiment[0].assert[0].grids");
        assert_eq!(
            field_path(&BASIC.replace("reference = \"backprop\"", "reference = \"tangent\"")),
            "experiment[0].assert[0].reference"
        );
        assert_eq!(
            field_path(&BASIC.replace("{ kind = \"backprop\" }", "{ kind = \"backprop\", epsilon = 1e-6 }")),
            "experiment[0].methods[0].epsilon"
        );
        assert_eq!(
            field_path(&BASIC.replace("problem = { zoo = \"linear-scalar\" }", "problem = { zoo = \"linear-scalar\", labels = [0.33] }")),
            "experiment[0].grids[0]"
        );
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let err = SuiteConfig::parse("schema_version = 1\n[[experiment]]\nname = \n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = SuiteConfig::parse("schema_version = 1\nbogus = 3\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn inline_problem_needs_values() {
        let text = BASIC.replace(
            "problem = { zoo = \"linear-scalar\" }",
            "problem = { inline = { field = \"linear-system\", n = 2 }, theta = [0.1, 0.0, 0.0, -0.1] }",
        );
        assert_eq!(field_path(&text), "experiment[0].problem.z0");
        let text = BASIC.replace(
            "problem = { zoo = \"linear-scalar\" }",
            "problem = { inline = { field = \"linear-system\", n = 2 }, theta = [0.1, 0.0, 0.0, -0.1], z0 = [1.0, 1.0] }",
        );
        let cfg = SuiteConfig::parse(&text).unwrap();
        assert_eq!(cfg.experiments[0].problem.field, FieldSpec::LinearSystem { n: 2 });
    }
}
