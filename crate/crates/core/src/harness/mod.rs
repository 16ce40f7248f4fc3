//! Problem zoo, experiment configuration, runner and reports.

pub mod config;
pub mod report;
pub mod runner;
pub mod zoo;

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

pub use config::{Assertion, ConfigError, ExperimentSpec, MethodKind, MethodSpec, SuiteConfig};
pub use report::{SuiteMetadata, SuiteSummary};
pub use runner::{run_experiment, ExperimentReport, ExperimentRun};
pub use zoo::{zoo, ProblemSpec};

/// The shipped comparison suite run by `adjoint-lab demo`.
pub const DEMO_SUITE: &str = include_str!("../../suites/demo.toml");

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; `None` lets rayon decide.
    pub threads: Option<usize>,
    /// Overrides the config's seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub summary: SuiteSummary,
    pub metadata: SuiteMetadata,
    pub runs: Vec<ExperimentRun>,
}

/// Runs every experiment on a worker pool. Results come back in config order
/// whatever the scheduling, so reports do not depend on the thread count.
pub fn run_suite(config: &SuiteConfig, opts: RunOptions) -> Result<SuiteOutcome, rayon::ThreadPoolBuildError> {
    let seed = opts.seed.unwrap_or(config.seed);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.threads.unwrap_or(0)).build()?;
    let start = Instant::now();
    let runs: Vec<ExperimentRun> =
        pool.install(|| config.experiments.par_iter().map(|e| run_experiment(e, seed)).collect());
    let experiments: Vec<_> = runs.iter().map(|r| report::ExperimentSummary::of(&r.report)).collect();
    let summary = SuiteSummary {
        schema_version: config.schema_version,
        seed,
        passed: experiments.iter().all(|e| e.passed),
        experiments,
    };
    let metadata = SuiteMetadata {
        unix_time: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        threads: pool.current_num_threads(),
        wall_seconds: start.elapsed().as_secs_f64(),
        crate_version: env!("CARGO_PKG_VERSION"),
    };
    Ok(SuiteOutcome { summary, metadata, runs })
}

/// Writes every report, serially, then the summary.
pub fn write_outcome(out: &Path, outcome: &SuiteOutcome) -> std::io::Result<()> {
    std::fs::create_dir_all(out)?;
    for run in &outcome.runs {
        report::write_experiment(out, run)?;
    }
    report::write_summary(out, &outcome.summary, &outcome.metadata)
}
