use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use adjoint_lab::harness::{self, report, zoo, RunOptions, SuiteConfig};

/// Compare continuous adjoints, discrete adjoints, tangents, reverse
/// accumulation and finite differences on small ODE problems.
#[derive(Parser)]
#[command(name = "adjoint-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment in a suite file and write reports.
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: RunArgs,
    },
    /// List the built-in problems.
    ListZoo,
    /// Parse and check a suite file without running it.
    Validate { config: PathBuf },
    /// Run the shipped comparison suite.
    Demo {
        #[command(flatten)]
        opts: RunArgs,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Report directory.
    #[arg(long, default_value = "reports")]
    out: PathBuf,
    /// Worker threads (default: one per core).
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the suite's seed for randomized instances.
    #[arg(long)]
    seed: Option<u64>,
}

const EXIT_ASSERTION: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn run(config: &SuiteConfig, args: &RunArgs) -> ExitCode {
    if args.threads == Some(0) {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(EXIT_CONFIG);
    }
    let opts = RunOptions { threads: args.threads, seed: args.seed };
    let outcome = match harness::run_suite(config, opts) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Err(e) = harness::write_outcome(&args.out, &outcome) {
        eprintln!("error: writing reports to {}: {e}", args.out.display());
        return ExitCode::from(EXIT_CONFIG);
    }
    print!("{}", report::render_summary(&outcome.summary));
    println!("reports in {}", args.out.display());
    if outcome.summary.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_ASSERTION)
    }
}

fn load(path: &Path) -> Result<SuiteConfig, ExitCode> {
    SuiteConfig::from_path(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(EXIT_CONFIG)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, opts } => match load(&config) {
            Ok(cfg) => run(&cfg, &opts),
            Err(code) => code,
        },
        Command::ListZoo => {
            for (name, about) in zoo::ZOO {
                println!("{name:<20} {about}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load(&config) {
            Ok(cfg) => {
                for e in &cfg.experiments {
                    let labels: Vec<&str> = e.methods.iter().map(|m| m.label.as_str()).collect();
                    println!(
                        "{}: {} on {} grids, {} instance(s), methods {}",
                        e.name,
                        e.problem.name,
                        e.grids.len(),
                        e.draws + 1,
                        labels.join(", ")
                    );
                }
                println!("ok: {} experiment(s)", cfg.experiments.len());
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Demo { opts } => {
            let cfg = SuiteConfig::parse(harness::DEMO_SUITE).expect("the shipped suite parses");
            run(&cfg, &opts)
        }
    }
}
