use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use msjm_cli::{commands, config::RunConfig, CliError};

#[derive(Parser)]
#[command(
    name = "msjm",
    version,
    about = "Joint models of biomarkers and multi-state processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if absent.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a cohort from the `truth` parameters.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit parameters to a cohort.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Directory holding the cohort files.
        #[arg(long)]
        data: PathBuf,
    },
    /// Fisher information and standard errors at given parameters.
    Fim {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Parameter file written by `fit`.
        #[arg(long)]
        params: PathBuf,
    },
    /// Dynamic prediction of future states.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        params: PathBuf,
    },
}

fn setup(c: &Common) -> Result<(RunConfig, u64), CliError> {
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        #[cfg(feature = "parallel")]
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let cfg = RunConfig::load(&c.config)?;
    let seed = c.seed.unwrap_or(cfg.seed);
    std::fs::create_dir_all(&c.out)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", c.out.display())))?;
    Ok((cfg, seed))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common } => {
            let (cfg, seed) = setup(&common)?;
            commands::simulate(&cfg, &common.out, seed)
        }
        Command::Fit { common, data } => {
            let (cfg, seed) = setup(&common)?;
            commands::fit(&cfg, &data, &common.out, seed)
        }
        Command::Fim {
            common,
            data,
            params,
        } => {
            let (cfg, seed) = setup(&common)?;
            commands::fim(&cfg, &data, &params, &common.out, seed)
        }
        Command::Predict {
            common,
            data,
            params,
        } => {
            let (cfg, seed) = setup(&common)?;
            commands::predict(&cfg, &data, &params, &common.out, seed)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
