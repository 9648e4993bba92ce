use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use forgetful_core::experiments::{run_experiment, ExperimentConfig, EXPERIMENTS};

/// Run one experiment and write its traces, plots and manifest.
#[derive(Debug, Parser)]
#[command(name = "sim", version)]
struct Args {
    /// One of: zvn-train, zvn-discharge, circle-train, circle-discharge,
    /// circle-remind, beta-study, read-error-study, calibrate-device, build-map
    experiment: String,

    /// TOML config, or a manifest.json from an earlier run
    #[arg(long)]
    config: Option<PathBuf>,

    /// Overrides the seed in the config
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory (default: out/<experiment>)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if !EXPERIMENTS.contains(&args.experiment.as_str()) {
        eprintln!("unknown experiment `{}`; expected one of {}", args.experiment, EXPERIMENTS.join(", "));
        return ExitCode::from(2);
    }
    let loaded = match &args.config {
        Some(path) => ExperimentConfig::load(&args.experiment, path),
        None => ExperimentConfig::defaults_for(&args.experiment),
    };
    let mut cfg = match loaded {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args.out.unwrap_or_else(|| PathBuf::from("out").join(&args.experiment));
    match run_experiment(&args.experiment, &cfg, &out) {
        Ok(run) => {
            println!("{}", run.summary);
            println!("wrote {} files to {}", run.files.len() + 1, run.dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
