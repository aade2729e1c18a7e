use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use trustsim::config::ConfigLayer;
use trustsim::presets::{run_experiment, ExperimentPreset, ExperimentRequest};

/// Run a belief/trust dynamics experiment and write CSV outputs.
#[derive(Debug, Parser)]
#[command(name = "simulate", version)]
struct Args {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset: fig1-isolated, fig2-prior-knowledge, fig3-pair-trace,
    /// fig4-run-panels, fig5-run-means, fig6-grand-means.
    #[arg(long)]
    preset: Option<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Objective reliability; replaces a preset's reliability sweep.
    #[arg(long = "p-obj")]
    p_obj: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn main() -> ExitCode {
    let args = Args::parse();

    let preset = match args.preset.as_deref().map(str::parse::<ExperimentPreset>).transpose() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if preset.is_none() && args.config.is_none() {
        eprintln!("error: either --config or --preset is required");
        return ExitCode::from(2);
    }
    let file = match &args.config {
        Some(path) => match ConfigLayer::from_path(path) {
            Ok(layer) => layer,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => ConfigLayer::default(),
    };
    let request = ExperimentRequest {
        preset,
        file,
        cli: ConfigLayer {
            master_seed: args.seed,
            runs: args.runs,
            steps: args.steps,
            p_obj: args.p_obj,
            ..Default::default()
        },
        threads: args.threads,
    };

    match run_experiment(&request, &args.out) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
