//! Command-line front end for harmonic admittance models and frequency scans.

mod commands;
mod config;
mod grid;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("comparison failed: {0}")]
    Tolerance(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Tolerance(_) => 3,
        }
    }
}

impl From<htf_mmc::Error> for CliError {
    fn from(e: htf_mmc::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "htf-mmc",
    version,
    about = "Harmonic admittance models and frequency scans of MMC and two-level converters"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Global {
    /// System configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps and scans.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Harmonic truncation order.
    #[arg(long = "h", global = true)]
    h: Option<usize>,
    /// Frequency grid `start:stop:points:log|lin` (Hz).
    #[arg(long, global = true)]
    grid: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a reference configuration.
    InitConfig {
        /// MMC or VSC2L.
        #[arg(long, default_value = "MMC")]
        converter: String,
        /// OpenLoop, GFM, GFL_PQ, GFL_DC, ConstCurrent or ConstVf.
        #[arg(long, default_value = "GFL_PQ")]
        control: String,
    },
    /// Simulate to periodic steady state and write the operating point.
    Opoint,
    /// Evaluate the harmonic admittance model over the grid.
    Admittance {
        /// Operating point file; defaults to `<out>/opoint.json`.
        #[arg(long)]
        opoint: Option<PathBuf>,
    },
    /// Measure the admittance with the time-domain simulator.
    Scan,
    /// Compare an analytic table against a scan table.
    Compare {
        #[arg(long)]
        analytic: PathBuf,
        #[arg(long)]
        scan: PathBuf,
    },
    /// Dump raw waveforms from the time-domain simulator.
    Simulate {
        /// Simulated time, s.
        #[arg(long, default_value_t = 0.1)]
        duration_s: f64,
        /// Store every n-th step.
        #[arg(long, default_value_t = 10)]
        decimation: usize,
        /// Injection `freq_hz:pos|neg:amplitude_pu`.
        #[arg(long)]
        inject: Option<String>,
        /// Start from the periodic steady state instead of the default start.
        #[arg(long)]
        from_steady_state: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let g = cli.global;
    let result = match cli.command {
        Command::InitConfig { converter, control } => commands::init_config(&g, &converter, &control),
        Command::Opoint => commands::opoint(&g),
        Command::Admittance { opoint } => commands::admittance(&g, opoint.as_deref()),
        Command::Scan => commands::scan(&g),
        Command::Compare { analytic, scan } => commands::compare(&g, &analytic, &scan),
        Command::Simulate {
            duration_s,
            decimation,
            inject,
            from_steady_state,
        } => commands::simulate(&g, duration_s, decimation, inject.as_deref(), from_steady_state),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
