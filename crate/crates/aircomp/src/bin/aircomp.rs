//! Experiment CLI: run configured sweeps, reproduce the built-in figure
//! presets, or run the acceptance suite.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use aircomp::acceptance::run_all;
use aircomp::experiment::{figure_preset, run_experiment, write_results, ExperimentSpec};

#[derive(Parser)]
#[command(name = "aircomp", version, about = "Hybrid beamforming experiments for over-the-air computation")]
struct Cli {
    /// Override the base RNG seed of the sweep.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for trial parallelism (default: AIRCOMP_THREADS env
    /// var, else all cores). Results do not depend on the thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the number of Monte-Carlo trials per sweep point.
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a TOML config file.
    Run {
        /// Path to the experiment config (TOML).
        config: PathBuf,
        /// Output directory for the CSV and its manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a built-in preset (fig2 through fig9).
    Figure {
        /// Preset tag: fig2, fig3, ..., fig9.
        tag: String,
        /// Output directory for the CSV and its manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the acceptance suite and print one line per criterion.
    Validate,
}

fn init_threads(threads: Option<usize>) -> Result<(), String> {
    let n = threads.or_else(|| {
        std::env::var("AIRCOMP_THREADS")
            .ok()
            .and_then(|s| s.parse().ok())
    });
    if let Some(n) = n {
        if n == 0 {
            return Err("thread count must be >= 1".into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn execute_sweep(
    mut spec: ExperimentSpec,
    name: &str,
    out: &Path,
    seed: Option<u64>,
    trials: Option<usize>,
) -> Result<(), String> {
    if let Some(s) = seed {
        spec.base_seed = s;
    }
    if let Some(t) = trials {
        spec.trials = t;
    }
    spec.validate().map_err(|e| e.to_string())?;
    let res = run_experiment(&spec).map_err(|e| e.to_string())?;
    std::fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))?;
    let csv_path = out.join(format!("{name}.csv"));
    write_results(&res, &spec, &csv_path).map_err(|e| e.to_string())?;
    println!(
        "wrote {} ({} rows) and {}",
        csv_path.display(),
        res.rows.len(),
        csv_path.with_extension("manifest").display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<bool, String> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Run { config, out } => {
            let spec = ExperimentSpec::from_toml_file(&config).map_err(|e| e.to_string())?;
            let name = config
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("experiment")
                .to_string();
            execute_sweep(spec, &name, &out, cli.seed, cli.trials)?;
            Ok(true)
        }
        Command::Figure { tag, out } => {
            let spec = figure_preset(&tag)
                .ok_or_else(|| format!("unknown figure tag '{tag}' (expected fig2..fig9)"))?;
            execute_sweep(spec, &tag, &out, cli.seed, cli.trials)?;
            Ok(true)
        }
        Command::Validate => {
            let results = run_all();
            Ok(results.iter().all(|r| r.passed))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: validation: one or more acceptance criteria failed");
            ExitCode::FAILURE
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
