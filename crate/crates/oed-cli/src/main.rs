use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use oed_cli::config::{load_config, CliError};
use oed_cli::run::{self, Task};
use oed_cli::validate;

#[derive(Parser)]
#[command(
    name = "oed",
    version,
    about = "Simulation-based optimal Bayesian experimental design"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate expected information gain on a design grid.
    Scan(RunArgs),
    /// Run an ensemble of stochastic optimizer restarts over the design
    /// space.
    Optimize(RunArgs),
    /// Project the model onto a polynomial chaos surrogate.
    Surrogate(RunArgs),
    /// Sample the posterior at a fixed design with DRAM.
    Infer(RunArgs),
    /// Profile nested Monte Carlo estimator bias against a reference.
    Bias(RunArgs),
    /// Run the acceptance criteria, one pass/fail line each.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores; results do not depend on it).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (default: config `output`, then `artifacts`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted-path config override, e.g. --set estimator.n_out=2000.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Unused; the criteria pin their own configurations.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores; results do not depend on it).
    #[arg(long)]
    workers: Option<usize>,
    /// Criterion numbers to run, comma separated (default: all).
    #[arg(long, value_delimiter = ',')]
    criteria: Vec<u32>,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.message }));
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, CliError> {
    let (task, args) = match command {
        Command::Validate(args) => {
            init_workers(args.workers)?;
            let selected = if args.criteria.is_empty() {
                None
            } else {
                Some(args.criteria)
            };
            let results = validate::run_selected(selected.as_deref())?;
            for criterion in &results {
                println!("{}", criterion.line());
            }
            let all_passed = results.iter().all(|c| c.passed);
            return Ok(if all_passed { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
        Command::Scan(args) => (Task::Scan, args),
        Command::Optimize(args) => (Task::Optimize, args),
        Command::Surrogate(args) => (Task::Surrogate, args),
        Command::Infer(args) => (Task::Infer, args),
        Command::Bias(args) => (Task::Bias, args),
    };
    init_workers(args.workers)?;
    let config = load_config(&args.config, &args.set, args.seed, args.out)?;
    for file in run::run(task, &config)? {
        println!("{}", file.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn init_workers(workers: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::new(format!("worker pool: {e}")))?;
    }
    Ok(())
}
