//! Run configuration: built-in defaults, then an optional JSON file, then flags.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use enwell_core::analytics::KMeansOptions;
use enwell_core::pipeline::{
    AnalysisConfig, KChoice, DEFAULT_K, DEFAULT_MIN_COMPLETENESS, DEFAULT_TOP_N,
};
use enwell_core::sim::PERSONA_IDS;
use serde::{Deserialize, Serialize};

use crate::UsageError;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_DAYS: usize = 30;
pub const DATA_DIR_ENV: &str = "ENWELL_DATA_DIR";

pub fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 6, 19).expect("valid date")
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub personas: Option<Vec<String>>,
    pub start: Option<NaiveDate>,
    pub days: Option<usize>,
    pub seed: Option<u64>,
    pub k: Option<KChoice>,
    pub restarts: Option<usize>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub min_completeness: Option<f64>,
    pub top_n: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))
    }

    /// Values set here replace those in `self`.
    pub fn overlay(self, flags: FileConfig) -> FileConfig {
        FileConfig {
            personas: flags.personas.or(self.personas),
            start: flags.start.or(self.start),
            days: flags.days.or(self.days),
            seed: flags.seed.or(self.seed),
            k: flags.k.or(self.k),
            restarts: flags.restarts.or(self.restarts),
            max_iters: flags.max_iters.or(self.max_iters),
            tol: flags.tol.or(self.tol),
            min_completeness: flags.min_completeness.or(self.min_completeness),
            top_n: flags.top_n.or(self.top_n),
            out_dir: flags.out_dir.or(self.out_dir),
        }
    }

    pub fn resolve(self, default_out: PathBuf) -> Result<RunConfig, UsageError> {
        let personas = self
            .personas
            .unwrap_or_else(|| PERSONA_IDS.iter().map(|s| s.to_string()).collect());
        if personas.is_empty() {
            return Err(UsageError("at least one persona is required".into()));
        }
        let seed = self.seed.unwrap_or(DEFAULT_SEED);
        let config = RunConfig {
            personas,
            start: self.start.unwrap_or_else(default_start),
            days: self.days.unwrap_or(DEFAULT_DAYS),
            seed,
            analysis: AnalysisConfig {
                k: self.k.unwrap_or(KChoice::Fixed(DEFAULT_K)),
                kmeans: KMeansOptions {
                    seed,
                    restarts: self.restarts.unwrap_or(KMeansOptions::default().restarts),
                    max_iters: self.max_iters.unwrap_or(KMeansOptions::default().max_iters),
                    tol: self.tol.unwrap_or(KMeansOptions::default().tol),
                },
                min_completeness: self.min_completeness.unwrap_or(DEFAULT_MIN_COMPLETENESS),
                top_n: self.top_n.unwrap_or(DEFAULT_TOP_N),
            },
            out_dir: self.out_dir.unwrap_or(default_out),
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub personas: Vec<String>,
    pub start: NaiveDate,
    pub days: usize,
    pub seed: u64,
    pub analysis: AnalysisConfig,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), UsageError> {
        if self.days == 0 {
            return Err(UsageError("days must be at least 1".into()));
        }
        if let Some(bad) = self
            .personas
            .iter()
            .find(|p| !PERSONA_IDS.contains(&p.as_str()))
        {
            return Err(UsageError(format!(
                "unknown persona {bad:?}; valid ids are {}",
                PERSONA_IDS.join(", ")
            )));
        }
        self.analysis.validate().map_err(UsageError)
    }
}
