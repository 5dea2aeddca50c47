//! `rollstab`: batch front end.
//!
//! ```text
//! rollstab <optimize|synthesize|validate|sweep|analyze> [--config PATH] [--out DIR] [--seed N] [--quiet]
//! ```
//!
//! Exit status: 0 success, 1 file-system error, 2 configuration error,
//! 3 solver failure, 4 model singularity.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use rollstab::io::{self, Outcome, RunConfig, RunError, RunOptions};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Verb {
    /// Solve the optimal control problem of the configured scenario.
    Optimize,
    /// Fit the feedback gains.
    Synthesize,
    /// Run the closed loop with a given or fitted gain.
    Validate,
    /// Fit the yaw-rate gain over a list of fishhooks.
    Sweep,
    /// Rollover analysis of the closed loop (uncontrolled by default).
    Analyze,
}

#[derive(Debug, Parser)]
#[command(name = "rollstab", version, about = "Rollover-preventive active suspension forces")]
struct Cli {
    #[arg(value_enum)]
    verb: Verb,
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, overriding `[output] dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed of the random initial guess.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// No progress lines.
    #[arg(long)]
    quiet: bool,
}

fn run(cli: &Cli) -> Result<Outcome, RunError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    let opts = RunOptions { seed: cli.seed, quiet: cli.quiet };
    match cli.verb {
        Verb::Optimize => io::run_optimize(&cfg, &opts),
        Verb::Synthesize => io::run_synthesize(&cfg, &opts),
        Verb::Validate => io::run_validate(&cfg, &opts),
        Verb::Sweep => io::run_sweep(&cfg, &opts),
        Verb::Analyze => io::run_analyze(&cfg, &opts),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors are configuration errors; --help and --version are not
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(outcome) => {
            if !cli.quiet {
                for f in &outcome.files {
                    eprintln!("wrote {}", f.display());
                }
                if outcome.exit_code() != 0 {
                    eprintln!("solver did not converge: {}", outcome.report.status);
                }
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("rollstab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
