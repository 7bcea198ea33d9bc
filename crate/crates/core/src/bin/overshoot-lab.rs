use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use overshoot_lab::config::{ExperimentConfig, OutputFormat};
use overshoot_lab::{run, Exec, RunOptions, Subcommand};

/// Monte Carlo verification of overshoot moment bounds.
///
/// Exit status: 0 when no asserted bound fails (for the counterexample
/// subcommands: when the predicted violation is reproduced), 1 on a failing
/// verdict, 2 on a config or usage error, 3 on a runtime error.
#[derive(Debug, Parser)]
#[command(name = "overshoot-lab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Subcommand,

    /// Experiment config file (flat key = value).
    #[arg(long)]
    config: PathBuf,

    /// Overrides `master_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,

    /// csv, json or both; overrides `output.format`.
    #[arg(long, value_parser = parse_format)]
    format: Option<OutputFormat>,

    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long, env = "OVERSHOOT_LAB_WORKERS")]
    workers: Option<usize>,

    /// Suppress per-cell verdict lines.
    #[arg(long)]
    quiet: bool,
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    OutputFormat::parse(s).ok_or_else(|| format!("expected csv, json or both, got `{s}`"))
}

fn exec_for(workers: Option<usize>) -> Result<Exec, String> {
    match workers {
        Some(0) => Err("--workers must be at least 1".into()),
        Some(1) => Ok(Exec::Sequential),
        Some(n) => {
            #[cfg(feature = "parallel")]
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| e.to_string())?;
            #[cfg(not(feature = "parallel"))]
            let _ = n;
            Ok(Exec::Parallel)
        }
        None => Ok(Exec::Parallel),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = match exec_for(cli.workers) {
        Ok(e) => e,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cfg = match ExperimentConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(if e.is_config() { 2 } else { 3 });
        }
    };
    let opts = RunOptions {
        seed: cli.seed,
        out_dir: cli.out,
        format: cli.format,
        quiet: cli.quiet,
        exec,
    };
    match run(cli.command, &cfg, &opts, &mut std::io::stdout().lock()) {
        Ok(outcome) => {
            for f in &outcome.failures {
                eprintln!("FAIL {f}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
