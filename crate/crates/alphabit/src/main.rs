use std::path::PathBuf;
use std::process::ExitCode;

use alphabit::commands::{cmd_experiment, cmd_explain, cmd_synth, cmd_targets};
use alphabit::{Result, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "alphabit", version, about = "Explain the sign of idiosyncratic returns from ESG features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic market with planted ESG effects.
    Synth(Args),
    /// Compute one-bit targets from prices and factors.
    Targets(Args),
    /// Random searches with dependence and performance reports.
    Experiment(Args),
    /// SHAP values, partial dependence and materiality of the latest model.
    Explain(Args),
}

#[derive(clap::Args)]
struct Args {
    /// JSON run config, or a manifest written by an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(args: &Args) -> Result<RunConfig> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<PathBuf> {
    let (args, command): (&Args, fn(&RunConfig) -> Result<PathBuf>) = match &cli.command {
        Command::Synth(a) => (a, cmd_synth),
        Command::Targets(a) => (a, cmd_targets),
        Command::Experiment(a) => (a, cmd_experiment),
        Command::Explain(a) => (a, cmd_explain),
    };
    command(&load(args)?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("alphabit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

