//! `qbounce`: spectra, matrix elements and driven dynamics of a neutron
//! between vibrating mirrors, driven by a TOML configuration file.

mod cache;
mod commands;
mod config;
mod csv;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "qbounce",
    version,
    about = "Gravitational quantum states between vibrating mirrors"
)]
struct Cli {
    /// Configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir` from the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Energy levels and boundary slopes.
    Spectrum,
    /// Tables of <m|z|k>, <m|d/dz|k> and <m|z d/dz|k>.
    Matelem {
        /// Add quadrature columns and report the largest deviation.
        #[arg(long)]
        oracle: bool,
    },
    /// Integrate the amplitude equations.
    Evolve,
    /// Final-state observable as a function of drive frequency.
    Scan,
    /// Run the acceptance checks.
    Validate {
        /// Skip the checks that integrate the amplitude equations.
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<qbounce::Error> for CliError {
    fn from(e: qbounce::Error) -> Self {
        if e.is_input_error() {
            CliError::Config(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
        }
    }
}

fn output_dir(cli: &Cli, cfg: Option<&RunConfig>) -> Result<PathBuf, CliError> {
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.dir.as_ref().map(PathBuf::from)))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let cfg = match &cli.config {
        Some(p) => Some(RunConfig::load(p)?),
        None => None,
    };
    let need = || {
        cfg.as_ref()
            .ok_or_else(|| CliError::Config("this command needs --config".into()))
    };
    match &cli.command {
        Command::Spectrum => {
            let c = need()?;
            commands::spectrum(c, &output_dir(cli, Some(c))?)?;
        }
        Command::Matelem { oracle } => {
            let c = need()?;
            commands::matelem(c, &output_dir(cli, Some(c))?, *oracle)?;
        }
        Command::Evolve => {
            let c = need()?;
            commands::evolve(c, &output_dir(cli, Some(c))?)?;
        }
        Command::Scan => {
            let c = need()?;
            commands::scan(c, &output_dir(cli, Some(c))?)?;
        }
        Command::Validate { quick } => {
            return commands::validate(cfg.as_ref(), &output_dir(cli, cfg.as_ref())?, *quick);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
