//! Executes experiments: one forward solve per (instance, grid), every
//! configured method run against it, then discrepancies, slopes and
//! assertions.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::backprop::{backprop_gradient, fd_gradient};
use crate::continuous::{gradient_hard_reset, gradient_integral, solve_adjoint};
use crate::discrete::{discrete_gradient, solve_discrete_adjoint};
use crate::error::{Error, Result};
use crate::harness::config::{Assertion, ExperimentSpec, MethodKind, MethodSpec, FD_FINEST};
use crate::harness::zoo::{ProblemSpec, ResolvedProblem};
use crate::problem::{make_grid, relative_discrepancy, TimeGrid};
use crate::schemes::{solve_forward, Trajectory};
use crate::stats::{fit_loglog, LogLogFit};
use crate::tangent::tangent_gradient;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HardResetDetail {
    /// The per-interval double sum the weighted formula rearranges.
    pub nested_gradient: Vec<f64>,
    pub rearrangement_discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodOutcome {
    pub label: String,
    pub kind: MethodKind,
    /// Identity of the forward trajectory the method consumed; `None` for
    /// finite differences, which re-solve from scratch.
    pub trajectory_token: Option<String>,
    pub gradient: Option<Vec<f64>>,
    pub error: Option<String>,
    pub discrepancy_vs_backprop: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hard_reset: Option<HardResetDetail>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDiscrepancy {
    pub a: String,
    pub b: String,
    pub discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRun {
    pub n_steps: usize,
    pub h: f64,
    pub trajectory_token: Option<String>,
    pub forward_error: Option<String>,
    pub methods: Vec<MethodOutcome>,
    /// Every pair of methods that both produced a gradient.
    pub pairwise: Vec<PairDiscrepancy>,
}

impl GridRun {
    pub fn outcome(&self, label: &str) -> Option<&MethodOutcome> {
        self.methods.iter().find(|m| m.label == label)
    }

    pub fn discrepancy(&self, a: &str, b: &str) -> Option<f64> {
        self.pairwise
            .iter()
            .find(|p| (p.a == a && p.b == b) || (p.a == b && p.b == a))
            .map(|p| p.discrepancy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeRecord {
    pub method: String,
    pub reference: String,
    /// One entry per grid, in sweep order.
    pub discrepancies: Vec<Option<f64>>,
    pub fit: Option<LogLogFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceReport {
    /// 0 is the nominal problem; 1.. are seeded perturbations.
    pub index: usize,
    pub theta: Vec<f64>,
    pub z0: Vec<f64>,
    pub error: Option<String>,
    pub runs: Vec<GridRun>,
    pub slopes: Vec<SlopeRecord>,
}

impl InstanceReport {
    pub fn run(&self, n_steps: usize) -> Option<&GridRun> {
        self.runs.iter().find(|r| r.n_steps == n_steps)
    }

    pub fn slope(&self, method: &str, reference: &str) -> Option<&SlopeRecord> {
        self.slopes.iter().find(|s| s.method == method && s.reference == reference)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssertionOutcome {
    pub description: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub problem: ProblemSpec,
    pub forward_scheme: String,
    pub grids: Vec<usize>,
    pub methods: Vec<MethodSpec>,
    pub instances: Vec<InstanceReport>,
    pub assertions: Vec<AssertionOutcome>,
    pub passed: bool,
}

impl ExperimentReport {
    pub fn method_errors(&self) -> usize {
        self.instances
            .iter()
            .flat_map(|i| &i.runs)
            .flat_map(|r| &r.methods)
            .filter(|m| m.error.is_some())
            .count()
    }
}

/// Wall-clock time of one method on one grid. Kept out of the report so
/// reports stay byte-identical across runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodTiming {
    pub instance: usize,
    pub n_steps: usize,
    pub method: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub timings: Vec<MethodTiming>,
}

/// Hex SHA-256 of the trajectory's serialized form.
pub fn trajectory_token(traj: &Trajectory) -> String {
    let bytes = serde_json::to_vec(traj).expect("trajectories always serialize");
    format!("{:x}", Sha256::digest(&bytes))
}

/// Per-experiment seed: the suite seed mixed with the experiment's name, so
/// instances do not depend on where the experiment sits in the file.
fn experiment_seed(seed: u64, name: &str) -> u64 {
    let digest = Sha256::digest(name.as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    seed ^ u64::from_le_bytes(head)
}

/// The nominal problem followed by `spec.draws` seeded perturbations.
pub fn instances(spec: &ExperimentSpec, seed: u64) -> Vec<ProblemSpec> {
    let base = experiment_seed(seed, &spec.name);
    let mut out = vec![spec.problem.clone()];
    for k in 1..=spec.draws {
        let mut rng = ChaCha8Rng::seed_from_u64(base);
        rng.set_stream(k as u64);
        out.push(spec.problem.perturbed(&mut rng));
    }
    out
}

struct Computed {
    gradient: Vec<f64>,
    hard_reset: Option<HardResetDetail>,
}

fn compute(
    method: &MethodSpec,
    problem: &ProblemSpec,
    resolved: &ResolvedProblem,
    grid: &TimeGrid,
    spec: &ExperimentSpec,
    base: &Trajectory,
) -> Result<Computed> {
    let field = resolved.field.as_ref();
    let loss = &resolved.loss;
    let theta = &problem.theta;
    let plain = |g: crate::Covector| Computed { gradient: g.0, hard_reset: None };
    let backward = || method.backward_scheme.as_ref().ok_or_else(|| Error::InvalidArgument("missing backward scheme".into()));
    let rule = method.quadrature.unwrap_or_default();
    Ok(match method.kind {
        MethodKind::ContinuousAdjoint => {
            let adj = solve_adjoint(field, theta, base, loss, backward()?)?;
            plain(gradient_integral(field, theta, base, &adj, rule)?)
        }
        MethodKind::ContinuousAdjointHardReset => {
            let hr = gradient_hard_reset(field, theta, base, loss, backward()?, rule)?;
            let rearrangement_discrepancy = relative_discrepancy(&hr.weighted, &hr.nested);
            Computed {
                gradient: hr.weighted.0,
                hard_reset: Some(HardResetDetail { nested_gradient: hr.nested.0, rearrangement_discrepancy }),
            }
        }
        MethodKind::DiscreteAdjoint => {
            let adj = solve_discrete_adjoint(field, theta, base, loss)?;
            plain(discrete_gradient(field, theta, base, &adj)?)
        }
        MethodKind::Backprop => plain(backprop_gradient(field, theta, base, loss)?),
        MethodKind::Fd => {
            let eps = method.epsilon.unwrap_or(crate::backprop::DEFAULT_FD_EPSILON);
            plain(fd_gradient(field, theta, &problem.z0, grid, &spec.forward_scheme, loss, eps)?)
        }
        MethodKind::Tangent => plain(tangent_gradient(field, theta, base, loss)?),
    })
}

fn run_grid(
    spec: &ExperimentSpec,
    problem: &ProblemSpec,
    resolved: &ResolvedProblem,
    instance: usize,
    n_steps: usize,
    timings: &mut Vec<MethodTiming>,
) -> GridRun {
    let forward = make_grid(problem.t0, problem.t_end, n_steps)
        .and_then(|grid| Ok((grid, solve_forward(resolved.field.as_ref(), &problem.theta, &problem.z0, &grid, &spec.forward_scheme)?)));
    let (grid, base) = match forward {
        Ok(x) => x,
        Err(e) => {
            let msg = format!("forward solve failed: {e}");
            return GridRun {
                n_steps,
                h: (problem.t_end - problem.t0) / n_steps as f64,
                trajectory_token: None,
                forward_error: Some(msg.clone()),
                methods: spec
                    .methods
                    .iter()
                    .map(|m| MethodOutcome {
                        label: m.label.clone(),
                        kind: m.kind,
                        trajectory_token: None,
                        gradient: None,
                        error: Some(msg.clone()),
                        discrepancy_vs_backprop: None,
                        hard_reset: None,
                    })
                    .collect(),
                pairwise: Vec::new(),
            };
        }
    };
    let token = trajectory_token(&base);

    let mut methods: Vec<MethodOutcome> = Vec::with_capacity(spec.methods.len());
    for m in &spec.methods {
        let start = Instant::now();
        let result = compute(m, problem, resolved, &grid, spec, &base).and_then(|c| {
            if c.gradient.iter().all(|x| x.is_finite()) {
                Ok(c)
            } else {
                Err(Error::InvalidArgument("gradient has non-finite entries".into()))
            }
        });
        timings.push(MethodTiming {
            instance,
            n_steps,
            method: m.label.clone(),
            seconds: start.elapsed().as_secs_f64(),
        });
        let consumed = (m.kind != MethodKind::Fd).then(|| token.clone());
        methods.push(match result {
            Ok(c) => MethodOutcome {
                label: m.label.clone(),
                kind: m.kind,
                trajectory_token: consumed,
                gradient: Some(c.gradient),
                error: None,
                discrepancy_vs_backprop: None,
                hard_reset: c.hard_reset,
            },
            Err(e) => MethodOutcome {
                label: m.label.clone(),
                kind: m.kind,
                trajectory_token: consumed,
                gradient: None,
                error: Some(e.to_string()),
                discrepancy_vs_backprop: None,
                hard_reset: None,
            },
        });
    }

    let backprop = methods
        .iter()
        .find(|m| m.kind == MethodKind::Backprop)
        .and_then(|m| m.gradient.clone());
    if let Some(bp) = &backprop {
        for m in &mut methods {
            m.discrepancy_vs_backprop = m.gradient.as_ref().map(|g| relative_discrepancy(g, bp));
        }
    }

    let mut pairwise = Vec::new();
    for (i, a) in methods.iter().enumerate() {
        for b in &methods[i + 1..] {
            if let (Some(ga), Some(gb)) = (&a.gradient, &b.gradient) {
                pairwise.push(PairDiscrepancy {
                    a: a.label.clone(),
                    b: b.label.clone(),
                    discrepancy: relative_discrepancy(ga, gb),
                });
            }
        }
    }

    GridRun { n_steps, h: grid.h(), trajectory_token: Some(token), forward_error: None, methods, pairwise }
}

/// Method/reference pairs that get a convergence fit.
fn slope_pairs(spec: &ExperimentSpec) -> Vec<(String, String)> {
    let mut refs: Vec<String> = Vec::new();
    if let Some(bp) = spec.methods.iter().find(|m| m.kind == MethodKind::Backprop) {
        refs.push(bp.label.clone());
    }
    if spec.methods.iter().any(|m| m.kind == MethodKind::Fd) {
        refs.push(FD_FINEST.to_string());
    }
    let mut pairs: Vec<(String, String)> = Vec::new();
    for r in &refs {
        for m in &spec.methods {
            if &m.label != r {
                pairs.push((m.label.clone(), r.clone()));
            }
        }
    }
    for a in &spec.assertions {
        if let Assertion::Slope { method, reference, .. } = a {
            let pair = (method.clone(), reference.clone());
            if !pairs.contains(&pair) {
                pairs.push(pair);
            }
        }
    }
    pairs
}

fn slopes(spec: &ExperimentSpec, runs: &[GridRun]) -> Vec<SlopeRecord> {
    if runs.len() < 2 {
        return Vec::new();
    }
    let hs: Vec<f64> = runs.iter().map(|r| r.h).collect();
    // The finest-grid FD gradient, when an FD method is configured.
    let fd_finest: Option<Vec<f64>> = spec
        .methods
        .iter()
        .find(|m| m.kind == MethodKind::Fd)
        .and_then(|fd| {
            runs.iter()
                .max_by_key(|r| r.n_steps)
                .and_then(|r| r.outcome(&fd.label))
                .and_then(|o| o.gradient.clone())
        });
    slope_pairs(spec)
        .into_iter()
        .map(|(method, reference)| {
            let discrepancies: Vec<Option<f64>> = runs
                .iter()
                .map(|r| {
                    if reference == FD_FINEST {
                        let g = r.outcome(&method)?.gradient.as_ref()?;
                        Some(relative_discrepancy(g, fd_finest.as_ref()?))
                    } else {
                        r.discrepancy(&method, &reference)
                    }
                })
                .collect();
            let fit = if discrepancies.iter().all(Option::is_some) {
                let ds: Vec<f64> = discrepancies.iter().map(|d| d.unwrap()).collect();
                fit_loglog(&hs, &ds)
            } else {
                None
            };
            SlopeRecord { method, reference, discrepancies, fit }
        })
        .collect()
}

fn run_instance(spec: &ExperimentSpec, index: usize, problem: &ProblemSpec, timings: &mut Vec<MethodTiming>) -> InstanceReport {
    let mut report = InstanceReport {
        index,
        theta: problem.theta.clone(),
        z0: problem.z0.clone(),
        error: None,
        runs: Vec::new(),
        slopes: Vec::new(),
    };
    let resolved = match problem.resolve() {
        Ok(r) => r,
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };
    report.runs = spec
        .grids
        .iter()
        .map(|&n| run_grid(spec, problem, &resolved, index, n, timings))
        .collect();
    report.slopes = slopes(spec, &report.runs);
    report
}

/// `‖g − v‖ / ‖v‖`, or `‖g‖` when `v` is zero.
fn closeness(g: &[f64], v: &[f64]) -> f64 {
    let diff: Vec<f64> = g.iter().zip(v).map(|(a, b)| a - b).collect();
    let scale = crate::problem::vecops::norm(v);
    let d = crate::problem::vecops::norm(&diff);
    if scale == 0.0 {
        d
    } else {
        d / scale
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "missing".to_string(), |v| format!("{v:.3e}"))
}

fn evaluate(assertion: &Assertion, spec: &ExperimentSpec, instances: &[InstanceReport]) -> AssertionOutcome {
    let description = assertion.describe();
    let fail = |detail: String| AssertionOutcome { description: description.clone(), passed: false, detail };
    if instances.is_empty() {
        return fail("no instances ran".into());
    }
    if let Some(bad) = instances.iter().find(|i| i.error.is_some()) {
        return fail(format!("instance {}: {}", bad.index, bad.error.as_deref().unwrap_or_default()));
    }
    // Worst observed value and where; `ok` false if any check fails.
    let mut ok = true;
    let mut worst: Option<(f64, String)> = None;
    let mut note = |value: Option<f64>, at: String, pass: bool, worse: &dyn Fn(f64, f64) -> bool| {
        ok &= pass;
        match value {
            Some(v) => {
                if worst.as_ref().is_none_or(|(w, _)| worse(v, *w)) {
                    worst = Some((v, at));
                }
            }
            None => {
                if worst.as_ref().is_none_or(|(w, _)| w.is_finite()) {
                    worst = Some((f64::NAN, format!("{at} (missing)")));
                }
            }
        }
    };
    let larger = |a: f64, b: f64| a > b;
    let smaller = |a: f64, b: f64| a < b;

    match assertion {
        Assertion::MaxDiscrepancy { method, reference, max, grids } => {
            for inst in instances {
                for run in &inst.runs {
                    if grids.as_ref().is_some_and(|g| !g.contains(&run.n_steps)) {
                        continue;
                    }
                    let d = run.discrepancy(method, reference);
                    note(d, format!("instance {} n={}", inst.index, run.n_steps), d.is_some_and(|d| d <= *max), &larger);
                }
            }
        }
        Assertion::MinDiscrepancy { method, reference, min, grid } => {
            let n = grid.unwrap_or_else(|| *spec.grids.iter().min().unwrap_or(&0));
            for inst in instances {
                let d = inst.run(n).and_then(|r| r.discrepancy(method, reference));
                note(d, format!("instance {} n={n}", inst.index), d.is_some_and(|d| d >= *min), &smaller);
            }
        }
        Assertion::Slope { method, reference, expected, tolerance } => {
            for inst in instances {
                let s = inst.slope(method, reference).and_then(|s| s.fit).map(|f| f.slope);
                let off = s.map(|s| (s - expected).abs());
                note(
                    s,
                    format!("instance {}", inst.index),
                    off.is_some_and(|o| o <= *tolerance),
                    &|a, b| (a - expected).abs() > (b - expected).abs(),
                );
            }
        }
        Assertion::CloseTo { method, value, rtol, grids } => {
            for inst in instances {
                for run in &inst.runs {
                    if grids.as_ref().is_some_and(|g| !g.contains(&run.n_steps)) {
                        continue;
                    }
                    let d = run
                        .outcome(method)
                        .and_then(|o| o.gradient.as_ref())
                        .filter(|g| g.len() == value.len())
                        .map(|g| closeness(g, value));
                    note(d, format!("instance {} n={}", inst.index, run.n_steps), d.is_some_and(|d| d <= *rtol), &larger);
                }
            }
        }
    }
    let checked = worst.is_some();
    let detail = match worst {
        Some((v, at)) if v.is_nan() => format!("worst: {at}"),
        Some((v, at)) => format!("worst {} at {at}", fmt_opt(Some(v))),
        None => "nothing to check".to_string(),
    };
    AssertionOutcome { description, passed: ok && checked, detail }
}

/// Runs every instance and grid of one experiment.
pub fn run_experiment(spec: &ExperimentSpec, seed: u64) -> ExperimentRun {
    let mut timings = Vec::new();
    let instances: Vec<InstanceReport> = instances(spec, seed)
        .iter()
        .enumerate()
        .map(|(i, p)| run_instance(spec, i, p, &mut timings))
        .collect();
    let assertions: Vec<AssertionOutcome> = spec.assertions.iter().map(|a| evaluate(a, spec, &instances)).collect();
    let passed = assertions.iter().all(|a| a.passed);
    ExperimentRun {
        report: ExperimentReport {
            experiment: spec.name.clone(),
            seed,
            problem: spec.problem.clone(),
            forward_scheme: spec.forward_scheme.name().to_string(),
            grids: spec.grids.clone(),
            methods: spec.methods.clone(),
            instances,
            assertions,
            passed,
        },
        timings,
    }
}
