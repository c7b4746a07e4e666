//! Command-line front end and HTTP service for the enwell pipeline.

pub mod charts;
pub mod commands;
pub mod config;
pub mod service;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use enwell_core::pipeline::KChoice;

use crate::commands::ScriptSource;
use crate::config::{FileConfig, DATA_DIR_ENV};

/// A problem with how the program was invoked; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Parser)]
#[command(
    name = "enwell",
    version,
    about = "Smart-meter simulation, storage and load-profile analytics"
)]
pub struct Cli {
    /// Directory holding the reading store and default outputs.
    #[arg(long, global = true, env = DATA_DIR_ENV, default_value = "enwell-data")]
    pub data_dir: PathBuf,
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate personas and write readings CSV plus ground truth.
    Simulate {
        #[command(flatten)]
        period: PeriodArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: <data-dir>/sim).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Simulate a persona defined in a JSON file instead of a built-in one.
        #[arg(long, conflicts_with = "persona")]
        persona_file: Option<PathBuf>,
        /// JSON object mapping persona id to a list of anomaly scripts.
        #[arg(long, conflicts_with = "no_scripts")]
        scripts_file: Option<PathBuf>,
        /// Simulate without the default anomaly scripts.
        #[arg(long)]
        no_scripts: bool,
    },
    /// Add readings (CSV, or NDJSON by extension) to the store.
    Ingest {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Build daily profiles, cluster them and rank anomalous days.
    Analyze {
        /// Analyze this readings file instead of the store.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Restrict to one meter.
        #[arg(long)]
        meter: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: <data-dir>/analysis).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Serve ingestion and query endpoints over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
    /// Simulate every persona with its default scripts and analyze each.
    Casestudy {
        #[command(flatten)]
        period: PeriodArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: <data-dir>/casestudy).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct PeriodArgs {
    /// Comma-separated persona ids.
    #[arg(long, value_delimiter = ',')]
    pub persona: Option<Vec<String>>,
    /// First local day (YYYY-MM-DD).
    #[arg(long)]
    pub start: Option<NaiveDate>,
    #[arg(long)]
    pub days: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct AnalysisArgs {
    /// Cluster count 1..=6, or "auto" for the knee rule.
    #[arg(long)]
    pub k: Option<KChoice>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub min_completeness: Option<f64>,
    #[arg(long)]
    pub top_n: Option<usize>,
}

impl AnalysisArgs {
    fn into_config(self, seed: Option<u64>, out: Option<PathBuf>) -> FileConfig {
        FileConfig {
            seed,
            out_dir: out,
            k: self.k,
            restarts: self.restarts,
            max_iters: self.max_iters,
            tol: self.tol,
            min_completeness: self.min_completeness,
            top_n: self.top_n,
            ..Default::default()
        }
    }
}

fn period_config(period: PeriodArgs, seed: Option<u64>, out: Option<PathBuf>) -> FileConfig {
    FileConfig {
        personas: period.persona,
        start: period.start,
        days: period.days,
        seed,
        out_dir: out,
        ..Default::default()
    }
}

fn resolve(
    cli_config: &Option<PathBuf>,
    flags: FileConfig,
    default_out: PathBuf,
) -> Result<config::RunConfig, UsageError> {
    let base = match cli_config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    base.overlay(flags).resolve(default_out)
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let data_dir = cli.data_dir;
    match cli.command {
        Command::Simulate {
            period,
            seed,
            out,
            persona_file,
            scripts_file,
            no_scripts,
        } => {
            let cfg = resolve(
                &cli.config,
                period_config(period, seed, out),
                data_dir.join("sim"),
            )?;
            let scripts = match (scripts_file, no_scripts) {
                (Some(path), _) => ScriptSource::File(commands::load_json(&path)?),
                (None, true) => ScriptSource::None,
                (None, false) => ScriptSource::Defaults,
            };
            commands::simulate(&cfg, persona_file.as_deref(), &scripts)
        }
        Command::Ingest { files } => commands::ingest(&data_dir, &files),
        Command::Analyze {
            input,
            meter,
            seed,
            out,
            analysis,
        } => {
            let cfg = resolve(
                &cli.config,
                analysis.into_config(seed, out),
                data_dir.join("analysis"),
            )?;
            let store = match input {
                Some(path) => {
                    let mut store = enwell_core::store::TelemetryStore::in_memory();
                    store.ingest(commands::read_readings(&path)?)?;
                    store
                }
                None => commands::open_store(&data_dir)?,
            };
            if let Some(m) = &meter {
                if !store.contains_meter(m) {
                    anyhow::bail!("unknown meter {m:?}");
                }
            }
            commands::analyze(&store, meter.as_deref(), &cfg.out_dir, &cfg.analysis).map(|_| ())
        }
        Command::Serve { addr } => {
            let cfg = resolve(
                &cli.config,
                FileConfig::default(),
                data_dir.join("analysis"),
            )?;
            service::serve(&data_dir, &addr, cfg.analysis)
        }
        Command::Casestudy {
            period,
            seed,
            out,
            analysis,
        } => {
            let flags = FileConfig {
                personas: period.persona,
                start: period.start,
                days: period.days,
                ..analysis.into_config(seed, out)
            };
            let cfg = resolve(&cli.config, flags, data_dir.join("casestudy"))?;
            commands::casestudy(&cfg).map(|_| ())
        }
    }
}

/// Parses arguments and runs one command: 0 on success, 1 on runtime
/// errors, 2 on usage errors.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
