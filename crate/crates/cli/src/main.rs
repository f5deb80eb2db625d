use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fewshot_safety::harness::{self, load_config, Overrides, RunSummary, EXIT_CHECK_FAILED, EXIT_OK};
use fewshot_safety::Error;

/// Safety-filter experiments: closed-loop runs, baseline comparisons,
/// shielded policy-gradient training and acceptance checks.
#[derive(Parser, Debug)]
#[command(name = "fewshot", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the scenario described by a config file.
    Run(RunArgs),
    /// Run a baselines_1d config and print the comparison table.
    Compare(RunArgs),
    /// Run a train_4d config.
    Train(RunArgs),
    /// Run every config of a suite file; exits with 4 if any check fails.
    Check(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Config (or suite) file.
    path: PathBuf,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Integration step (sampling period for training).
    #[arg(long)]
    dt: Option<f64>,
    /// Number of training episodes.
    #[arg(long)]
    episodes: Option<usize>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, out: self.out.clone(), dt: self.dt, episodes: self.episodes }
    }
}

fn print_checks(summary: &RunSummary) {
    for c in &summary.outcome.report.checks {
        println!("{}", c.line());
    }
}

fn print_summary(summary: &RunSummary) {
    let report = &summary.outcome.report;
    println!("scenario {} seeds {:?}", report.scenario, report.seeds);
    for (k, a) in &report.aggregate {
        println!("  {k:<44} {:>14.6} ± {:.6}", a.mean, a.std);
    }
    print_checks(summary);
    println!("wrote {} files to {}", summary.manifest.artifacts.len() + 1, summary.out_dir.display());
}

fn dispatch(cli: &Cli) -> Result<i32, Error> {
    match &cli.command {
        Command::Run(a) => {
            let s = harness::run(&load_config(&a.path)?, &a.overrides())?;
            print_summary(&s);
        }
        Command::Compare(a) => {
            let s = harness::compare(&load_config(&a.path)?, &a.overrides())?;
            if let Some(t) = &s.outcome.table {
                print!("{t}");
            }
            print_checks(&s);
            println!("wrote {}", s.out_dir.join("comparison.csv").display());
        }
        Command::Train(a) => {
            let s = harness::train(&load_config(&a.path)?, &a.overrides())?;
            print_summary(&s);
        }
        Command::Check(a) => {
            let report = harness::check_suite(&a.path, &a.overrides())?;
            for (path, s) in &report.runs {
                println!("{}", path.display());
                for c in &s.outcome.report.checks {
                    println!("  {}", c.line());
                }
            }
            return Ok(if report.passed() { EXIT_OK } else { EXIT_CHECK_FAILED });
        }
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(harness::exit_code(&e) as u8)
        }
    }
}
