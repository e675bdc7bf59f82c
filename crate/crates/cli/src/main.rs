use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use euroem_core::{compare, load_system, run_pipeline, Error, RunConfig};

#[derive(Parser)]
#[command(name = "euroem", version, about = "Zonal market clearing, redispatch and cascade studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the model named in the config and write its artifacts.
    Run(RunArgs),
    /// Run DAM, ED, UC and OPF on one shared study and write a comparison table.
    Compare(RunArgs),
    /// Load and validate a dataset directory.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed, overriding the config and the dataset manifest.
    #[arg(long)]
    seed: Option<u64>,
}

const EXIT_FAILURE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_SOLVER: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_validation() => EXIT_VALIDATION,
        Some(e) if e.is_solver() => EXIT_SOLVER,
        Some(_) => EXIT_FAILURE,
        None if err.downcast_ref::<toml::de::Error>().is_some() => EXIT_VALIDATION,
        None => EXIT_FAILURE,
    }
}

fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Run(args) => {
            let config = load_config(&args)?;
            let run = run_pipeline(&config)?;
            let m = &run.metrics;
            println!(
                "{}: {} h, cost {:.0} EUR, max residual {:.2e}, artifacts in {}",
                run.model,
                m.hours,
                m.total_cost_eur,
                run.checks.max_constraint_residual,
                config.out.display()
            );
        }
        Command::Compare(args) => {
            let config = load_config(&args)?;
            let runs = compare(&config)?;
            for run in &runs {
                println!(
                    "{}: cost {:.0} EUR, fast activation {:.4}, DNS {:.1} MW",
                    run.model,
                    run.metrics.total_cost_eur,
                    run.metrics.activation_by_speed.get("fast").copied().unwrap_or(0.0),
                    run.metrics.cascades.cumulative_dns_mw
                );
            }
            println!("comparison written to {}", config.out.join("comparison.csv").display());
        }
        Command::Validate { dataset } => {
            let system = load_system(&dataset)?;
            println!(
                "{}: {} h, {} zones, {} buses, {} branches, {} thermal, {} storage, {} renewable, {} demands",
                system.name,
                system.horizon,
                system.zones.len(),
                system.buses.len(),
                system.branches.len(),
                system.thermal.len(),
                system.storage.len(),
                system.renewable.len(),
                system.demands.len()
            );
        }
    }
    Ok(())
}

/// Reads the config and applies the command-line overrides. Relative paths in
/// the file are taken from the config's own directory.
fn load_config(args: &RunArgs) -> anyhow::Result<RunConfig> {
    let text = fs::read_to_string(&args.config).map_err(|_| Error::MissingFile(args.config.clone()))?;
    let mut config: RunConfig = toml::from_str(&text).with_context(|| format!("parsing {}", args.config.display()))?;
    let base = args.config.parent().unwrap_or(Path::new(""));
    config.dataset = base.join(&config.dataset);
    config.out = match &args.out {
        Some(out) => out.clone(),
        None => base.join(&config.out),
    };
    if args.seed.is_some() {
        config.seed = args.seed;
    }
    Ok(config)
}
