//! `recoilspec`: fringe patterns, simulated power scans, cross-section
//! extraction and spread sweeps from TOML scenario files.
//!
//! Exit codes: 0 success, 2 invalid configuration or input files,
//! 3 numerical failure.

// `!(x > 0.0)` guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(name = "recoilspec", version, about = "Recoil-based absorption spectroscopy in Talbot-Lau interferometers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detector signal versus third-grating position, with and without
    /// the recoil laser.
    Pattern {
        config: PathBuf,
        /// Mean velocity in m/s, replacing the configured one.
        #[arg(long)]
        velocity: Option<f64>,
        /// Recoil-laser power in W (default: the configured power).
        #[arg(long)]
        power: Option<f64>,
        #[arg(long, default_value_t = 3.0)]
        periods: f64,
        #[arg(long, default_value_t = 600)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulated power-ramped fringe scans: one CSV per power step and a
    /// manifest.
    Scan {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to put the recoil laser.
        #[arg(long, value_enum, default_value_t = Shift::Configured)]
        shift: Shift,
        /// Protocol override, e.g. `molecules_per_sample=1000000`.
        #[arg(long = "protocol", value_name = "KEY=VALUE")]
        protocol: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sine fits and regression on a recorded scan.
    Extract {
        record: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Plain)]
        mode: Mode,
        /// Record with the full-period shift (fluorescence mode).
        #[arg(long)]
        full: Option<PathBuf>,
        /// Fluorescence spectrum CSV (wavelength_nm, weight), replacing the
        /// one stored with the record.
        #[arg(long)]
        spectrum: Option<PathBuf>,
        /// Summary file (default: inside the record directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recovered cross section versus relative velocity spread.
    Sweep {
        config: PathBuf,
        /// Comma-separated relative widths.
        #[arg(long, value_delimiter = ',', required = true)]
        widths: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "protocol", value_name = "KEY=VALUE")]
        protocol: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Noise-free ln(1/R) versus power for several fluorescence yields.
    FluoCurve {
        config: PathBuf,
        /// Comma-separated quantum yields.
        #[arg(long = "p-fluo", value_delimiter = ',', required = true)]
        p_fluo: Vec<f64>,
        #[arg(long)]
        spectrum: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        max_power: f64,
        #[arg(long, default_value_t = 21)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Shift {
    /// The configured laser distance.
    Configured,
    /// s = d/2 at the mean velocity.
    Half,
    /// s = d at the mean velocity.
    Full,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Plain,
    Fluorescence,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Pattern {
            config,
            velocity,
            power,
            periods,
            points,
            out,
        } => commands::pattern(&config, velocity, power, periods, points, &out),
        Command::Scan {
            config,
            seed,
            shift,
            protocol,
            out,
        } => commands::scan(&config, seed, shift, &protocol, &out),
        Command::Extract {
            record,
            mode,
            full,
            spectrum,
            out,
        } => commands::extract(&record, mode, full.as_deref(), spectrum.as_deref(), out.as_deref()),
        Command::Sweep {
            config,
            widths,
            seed,
            protocol,
            out,
        } => commands::sweep(&config, &widths, seed, &protocol, &out),
        Command::FluoCurve {
            config,
            p_fluo,
            spectrum,
            max_power,
            points,
            out,
        } => commands::fluo_curve(&config, &p_fluo, spectrum.as_deref(), max_power, points, &out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let config_error = err
                .downcast_ref::<recoilspec_core::Error>()
                .is_some_and(|e| e.is_config_error());
            ExitCode::from(if config_error { 2 } else { 3 })
        }
    }
}
