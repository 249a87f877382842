//! `cavity-jt`: surfaces, phase maps, wave-packet runs and oracle checks
//! driven by a single JSON config.
//!
//! Exit codes: 0 success, 1 I/O, 2 config error, 3 numerical-guard abort,
//! 4 validation failure.

mod commands;
mod presets;

use std::path::PathBuf;
use std::process::ExitCode;

use cavity_jt::config::RunConfig;
use cavity_jt::propagator::Mode;
use clap::{Args, Parser, Subcommand};

use commands::CliError;

#[derive(Parser)]
#[command(
    name = "cavity-jt",
    version,
    about = "Jahn-Teller wave-packet dynamics in a bimodal cavity"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration (see `cavity-jt presets`).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory; overrides the config's `output_dir` (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run only this propagation mode: full | semi.
    #[arg(long, global = true)]
    mode: Option<Mode>,
    /// Worker threads (speed only; results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Export the adiabatic surfaces V± for each configured Ω.
    Surfaces,
    /// Geometric-phase map over (λ, θ).
    Berry,
    /// Wave-packet propagation with the requested observables.
    Propagate,
    /// Grid propagation versus exact number-basis evolution.
    OracleCheck,
    /// Interference, fractional-revival and revival times.
    Timescales,
    /// List the built-in presets.
    Presets,
    /// Print the resolved configuration as JSON.
    ShowConfig,
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let text = match (&common.config, &common.preset) {
        (Some(path), _) => std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?,
        (None, Some(name)) => presets::lookup(name)
            .ok_or_else(|| {
                CliError::Config(format!(
                    "unknown preset '{name}' (known: {})",
                    presets::names().join(", ")
                ))
            })?
            .to_string(),
        (None, None) => return Err(CliError::Config("one of --config or --preset is required".into())),
    };
    RunConfig::from_json(&text).map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(k) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    if let Command::Presets = cli.command {
        for name in presets::names() {
            println!("{name}");
        }
        return Ok(());
    }
    let cfg = load(&cli.common)?;
    let out = cli
        .common
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let report = |files: Vec<PathBuf>| {
        for f in files {
            println!("{}", f.display());
        }
    };
    match cli.command {
        Command::Surfaces => report(commands::surfaces(&cfg, &out)?),
        Command::Berry => report(commands::berry(&cfg, &out)?),
        Command::Propagate => report(commands::propagate(&cfg, &out, cli.common.mode)?),
        Command::Timescales => println!("{}", commands::report_timescales(&cfg)?),
        Command::ShowConfig => println!("{}", cfg.to_json()),
        Command::OracleCheck => {
            let (path, ok) = commands::oracle_check(&cfg, &out)?;
            println!("{}", path.display());
            if !ok {
                return Err(CliError::Validation(format!(
                    "fidelity below threshold, see {}",
                    path.display()
                )));
            }
        }
        Command::Presets => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
