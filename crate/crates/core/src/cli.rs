//! `smc-mdp`: run experiments from a config file.
//!
//! Exit status is 0 on success, 1 when the command line or the config is invalid and
//! 2 when a run fails. A failed `run` or `ledger` removes the files it had written.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::error::Error;
use crate::experiments::{
    invariant_check, load_model_and_observations, run_experiments, run_ledger, test_function_names,
    write_ledger, write_manifest, write_results, ExperimentConfig, Harness, TestFunction,
    OUTPUT_FILES,
};
use crate::model::builtin_names;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_FAILED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "smc-mdp",
    version,
    about = "Particle filter experiments with exact and asymptotic references"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override a config value, e.g. `--set replications=500` or `--set deviation.delta=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed; same as `--set seed=S`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured experiments and write manifest, ledger and results.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory (overrides `out` in the config; default `out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; defaults to the available cores. Results do not depend on it.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Write the theory ledger only; no particles are drawn.
    Ledger {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the fast invariant suite.
    Check,
    /// List built-in models and test functions.
    ListModels,
    /// Parse and validate a config, then print it with every default filled in.
    ValidateConfig {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn load(args: &ConfigArgs) -> Result<ExperimentConfig, Error> {
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    let config = ExperimentConfig::from_file(&args.config, &overrides)?;
    // resolve everything a run needs before anything is written
    load_model_and_observations(&config)?;
    TestFunction::parse(&config.test_function)?;
    Ok(config)
}

fn out_dir(flag: Option<PathBuf>, config: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Remove every output file a failed run may have left, and the directory if it is empty.
fn clean(dir: &Path, created_dir: bool) {
    for name in OUTPUT_FILES {
        let _ = std::fs::remove_file(dir.join(name));
    }
    if created_dir {
        let _ = std::fs::remove_dir(dir);
    }
}

fn with_outputs(dir: &Path, body: impl FnOnce() -> Result<(), Error>) -> i32 {
    let created_dir = !dir.exists();
    match body() {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            clean(dir, created_dir);
            EXIT_FAILED
        }
    }
}

fn invalid(e: Error) -> i32 {
    eprintln!("error: {e}");
    EXIT_INVALID
}

fn dispatch(command: Command) -> i32 {
    match command {
        Command::Run {
            config,
            out,
            workers,
        } => {
            let config = match load(&config) {
                Ok(c) => c,
                Err(e) => return invalid(e),
            };
            let dir = out_dir(out, &config);
            let harness = Harness::new(config.seed, workers);
            with_outputs(&dir, || {
                let start = Instant::now();
                write_manifest(&dir, &config)?;
                let (report, ledger) = run_experiments(&config, &harness)?;
                let (_, obs) = load_model_and_observations(&config)?;
                write_ledger(&dir, &config, &obs, &ledger)?;
                write_results(&dir, &report)?;
                println!(
                    "wrote {} result rows to {} in {:.1?}",
                    report.rows.len(),
                    dir.display(),
                    start.elapsed()
                );
                Ok(())
            })
        }
        Command::Ledger { config, out } => {
            let config = match load(&config) {
                Ok(c) => c,
                Err(e) => return invalid(e),
            };
            let dir = out_dir(out, &config);
            with_outputs(&dir, || {
                write_manifest(&dir, &config)?;
                let ledger = run_ledger(&config)?;
                let (_, obs) = load_model_and_observations(&config)?;
                let path = write_ledger(&dir, &config, &obs, &ledger)?;
                let last = ledger.entry(ledger.horizon);
                println!(
                    "V_{} = {:.6}; ledger written to {}",
                    ledger.horizon,
                    last.v,
                    path.display()
                );
                Ok(())
            })
        }
        Command::Check => {
            let start = Instant::now();
            match invariant_check() {
                Ok(outcomes) => {
                    let mut ok = true;
                    for c in &outcomes {
                        println!(
                            "{} {}: {}",
                            if c.passed { "PASS" } else { "FAIL" },
                            c.name,
                            c.detail
                        );
                        ok &= c.passed;
                    }
                    println!("{} checks in {:.2?}", outcomes.len(), start.elapsed());
                    if ok {
                        EXIT_OK
                    } else {
                        EXIT_FAILED
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_FAILED
                }
            }
        }
        Command::ListModels => {
            println!("models:");
            for (name, about) in builtin_names() {
                println!("  {name:<20} {about}");
            }
            println!("test functions:");
            for (name, about) in test_function_names() {
                println!("  {name:<20} {about}");
            }
            EXIT_OK
        }
        Command::ValidateConfig { config } => match load(&config) {
            Ok(c) => match c.echo() {
                Ok(text) => {
                    print!("{text}");
                    EXIT_OK
                }
                Err(e) => invalid(e),
            },
            Err(e) => invalid(e),
        },
    }
}

/// Parse `args` (including the program name) and run the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => dispatch(cli.command),
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
            let _ = e.print();
            code
        }
    }
}

pub fn main_entry() -> i32 {
    run(std::env::args_os())
}
