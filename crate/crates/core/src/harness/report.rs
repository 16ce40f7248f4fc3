//! Report files.
//!
//! ```text
//! <out>/summary.json            pass/fail per experiment
//! <out>/metadata.json           timestamp, threads, wall time
//! <out>/<experiment>/report.json
//! <out>/<experiment>/gradients.csv
//! <out>/<experiment>/metadata.json   per-method runtimes
//! ```
//!
//! Everything except the metadata files is a pure function of the config
//! and seed.

use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use crate::harness::runner::{ExperimentReport, ExperimentRun, MethodTiming};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub problem: String,
    pub passed: bool,
    pub assertions_passed: usize,
    pub assertions_total: usize,
    pub method_errors: usize,
    /// Descriptions and details of failed assertions.
    pub failures: Vec<String>,
}

impl ExperimentSummary {
    pub fn of(report: &ExperimentReport) -> Self {
        ExperimentSummary {
            name: report.experiment.clone(),
            problem: report.problem.name.clone(),
            passed: report.passed,
            assertions_passed: report.assertions.iter().filter(|a| a.passed).count(),
            assertions_total: report.assertions.len(),
            method_errors: report.method_errors(),
            failures: report
                .assertions
                .iter()
                .filter(|a| !a.passed)
                .map(|a| format!("{}: {}", a.description, a.detail))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteSummary {
    pub schema_version: u32,
    pub seed: u64,
    pub passed: bool,
    pub experiments: Vec<ExperimentSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteMetadata {
    pub unix_time: u64,
    pub threads: usize,
    pub wall_seconds: f64,
    pub crate_version: &'static str,
}

#[derive(Serialize)]
struct ExperimentMetadata<'a> {
    experiment: &'a str,
    timings: &'a [MethodTiming],
}

fn to_json<T: Serialize>(value: &T) -> io::Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Shortest round-trip form, with an exponent for very small or large values.
fn num(x: f64) -> String {
    serde_json::to_string(&x).unwrap_or_default()
}

/// `problem, instance, method, n_steps, grad_0.., discrepancy_vs_backprop`;
/// failed methods leave the gradient cells empty.
pub fn gradients_csv(report: &ExperimentReport) -> io::Result<Vec<u8>> {
    let p = report.problem.theta.len();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["problem".to_string(), "instance".into(), "method".into(), "n_steps".into()];
    header.extend((0..p).map(|j| format!("grad_{j}")));
    header.push("discrepancy_vs_backprop".into());
    w.write_record(&header)?;
    for inst in &report.instances {
        for run in &inst.runs {
            for m in &run.methods {
                let mut row = vec![
                    report.problem.name.clone(),
                    inst.index.to_string(),
                    m.label.clone(),
                    run.n_steps.to_string(),
                ];
                match &m.gradient {
                    Some(g) => row.extend(g.iter().map(|&x| num(x))),
                    None => row.extend(std::iter::repeat_n(String::new(), p)),
                }
                row.push(m.discrepancy_vs_backprop.map(num).unwrap_or_default());
                w.write_record(&row)?;
            }
        }
    }
    w.into_inner().map_err(|e| io::Error::other(e.to_string()))
}

pub fn write_experiment(out: &Path, run: &ExperimentRun) -> io::Result<()> {
    let dir = out.join(&run.report.experiment);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("report.json"), to_json(&run.report)?)?;
    fs::write(dir.join("gradients.csv"), gradients_csv(&run.report)?)?;
    let meta = ExperimentMetadata { experiment: &run.report.experiment, timings: &run.timings };
    fs::write(dir.join("metadata.json"), to_json(&meta)?)?;
    Ok(())
}

pub fn write_summary(out: &Path, summary: &SuiteSummary, meta: &SuiteMetadata) -> io::Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("summary.json"), to_json(summary)?)?;
    fs::write(out.join("metadata.json"), to_json(meta)?)?;
    Ok(())
}

/// Human-readable summary, one line per experiment plus failure details.
pub fn render_summary(summary: &SuiteSummary) -> String {
    let mut s = String::new();
    for e in &summary.experiments {
        s.push_str(&format!(
            "{} {:<28} {:>2}/{:<2} assertions  {} method errors\n",
            if e.passed { "PASS" } else { "FAIL" },
            e.name,
            e.assertions_passed,
            e.assertions_total,
            e.method_errors
        ));
        for f in &e.failures {
            s.push_str(&format!("     - {f}\n"));
        }
    }
    let total = summary.experiments.len();
    let passed = summary.experiments.iter().filter(|e| e.passed).count();
    s.push_str(&format!("{passed}/{total} experiments passed\n"));
    s
}
