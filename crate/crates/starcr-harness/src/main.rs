//! Command-line front end: run sweeps, trace single solves, validate specs.
//!
//! Exit codes: 0 full success, 1 spec or I/O error, 2 completed run with
//! partial trial failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use starcr_harness::{
    emit_convergence_trace, emit_star_csv, parse_spec, render_csv, run_experiment, run_trace,
    summarize, ExperimentSpec,
};

#[derive(Parser)]
#[command(name = "starcr", version, about = "Monte-Carlo sweeps for STAR-RIS sum-rate optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (scheme, value, trial) cell and write results.csv.
    Run {
        /// TOML experiment spec.
        spec: PathBuf,
        /// Output directory for results.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Override the spec's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Cap the worker thread count (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Solve trial 0 at the first sweep value per scheme and write
    /// per-iteration trace_<scheme>.csv plus final star_<scheme>.csv.
    Trace {
        /// TOML experiment spec.
        spec: PathBuf,
        /// Output directory for the trace files.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Override the spec's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and validate a spec, printing the resolved sweep.
    Validate {
        /// TOML experiment spec.
        spec: PathBuf,
    },
}

fn load_spec(path: &PathBuf, seed: Option<u64>) -> Result<ExperimentSpec, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut spec = parse_spec(&text).map_err(|e| e.to_string())?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    Ok(spec)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            spec,
            out,
            seed,
            workers,
        } => {
            let spec = match load_spec(&spec, seed) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(1);
                }
            };
            let output = run_experiment(&spec, workers);
            let path = out.join("results.csv");
            if let Err(e) = std::fs::create_dir_all(&out)
                .and_then(|()| std::fs::write(&path, render_csv(&output.rows)))
            {
                eprintln!("cannot write {}: {e}", path.display());
                return ExitCode::from(1);
            }
            print!("{}", summarize(&output.rows));
            println!("wrote {}", path.display());
            if output.any_failed {
                eprintln!("some trials failed; see the status column");
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Command::Trace { spec, out, seed } => {
            let spec = match load_spec(&spec, seed) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(1);
                }
            };
            let bundles = match run_trace(&spec) {
                Ok(b) => b,
                Err(e) => {
                    eprintln!("trace solve failed: {e}");
                    return ExitCode::from(2);
                }
            };
            if let Err(e) = std::fs::create_dir_all(&out) {
                eprintln!("cannot create {}: {e}", out.display());
                return ExitCode::from(1);
            }
            for bundle in &bundles {
                let name = bundle.scheme.as_str();
                let trace_path = out.join(format!("trace_{name}.csv"));
                let star_path = out.join(format!("star_{name}.csv"));
                let write = std::fs::write(&trace_path, emit_convergence_trace(&bundle.report))
                    .and_then(|()| std::fs::write(&star_path, emit_star_csv(&bundle.state.star)));
                if let Err(e) = write {
                    eprintln!("cannot write trace for {name}: {e}");
                    return ExitCode::from(1);
                }
                println!(
                    "{name}: {} iterations, {} bit/s/Hz -> {}, {}",
                    bundle.report.iterations,
                    bundle.report.sum_rate_bits,
                    trace_path.display(),
                    star_path.display()
                );
            }
            ExitCode::SUCCESS
        }
        Command::Validate { spec } => match load_spec(&spec, None) {
            Ok(spec) => {
                println!(
                    "ok: sweep {} over {} values, {} trials, {} schemes, seed {}",
                    spec.sweep.as_str(),
                    spec.values.len(),
                    spec.trials,
                    spec.schemes.len(),
                    spec.seed
                );
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(1)
            }
        },
    }
}
