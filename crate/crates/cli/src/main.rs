use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use geosmc_cli::{read_config, resolve, run_experiment, ExperimentName, Overrides};

/// Run one of the bundled SMC experiments.
#[derive(Debug, Parser)]
#[command(name = "geosmc", version)]
struct Args {
    /// JSON config; its values override the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment name.
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    dry_run: bool,
    /// List the experiment names and exit.
    #[arg(long)]
    list: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.list {
        for e in ExperimentName::ALL {
            println!("{e}");
        }
        return ExitCode::SUCCESS;
    }
    let result = (|| {
        let config = args.config.as_deref().map(read_config).transpose()?;
        let overrides = Overrides {
            experiment: args.experiment.clone(),
            seed: args.seed,
            out_dir: args.out_dir.clone(),
            replicates: args.replicates,
            threads: args.threads,
        };
        let spec = resolve(config, &overrides)?;
        if args.dry_run {
            println!("{}", serde_json::to_string_pretty(&spec.to_value())?);
            return Ok(());
        }
        let manifest = run_experiment(&spec)?;
        let done = manifest.replicates.iter().filter(|r| r.completed).count();
        println!("{}: {done} replicate(s) written to {}", spec.experiment, spec.out_dir.display());
        Ok(())
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let e: geosmc_cli::CliError = e;
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
