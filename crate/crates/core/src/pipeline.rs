//! Readings-to-report pipeline shared by the command line and the service.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{
    anomaly_scores, build_daily_profiles, kmeans_fit, mean_cluster_profiles, select_k,
    AnalyticsError, AnomalyReport, ClusterModel, ClusterSummary, DailyProfile, ExcludedDay,
    KMeansOptions, KSelectionReport, MAX_K,
};
use crate::protocol::ObisCode;
use crate::store::{PowerSample, TelemetryStore};

pub const DEFAULT_MIN_COMPLETENESS: f64 = 0.9;
pub const DEFAULT_K: usize = 3;
pub const DEFAULT_TOP_N: usize = 3;

/// Number of clusters for the reported model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "KValue", into = "KValue")]
pub enum KChoice {
    /// Use the k recommended by the knee rule.
    Auto,
    Fixed(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum KValue {
    Number(usize),
    Text(String),
}

impl From<KChoice> for KValue {
    fn from(k: KChoice) -> Self {
        match k {
            KChoice::Auto => KValue::Text("auto".into()),
            KChoice::Fixed(k) => KValue::Number(k),
        }
    }
}

impl TryFrom<KValue> for KChoice {
    type Error = String;
    fn try_from(v: KValue) -> Result<Self, String> {
        match v {
            KValue::Number(k) => KChoice::Fixed(k).checked(),
            KValue::Text(s) => s.parse(),
        }
    }
}

impl KChoice {
    fn checked(self) -> Result<Self, String> {
        match self {
            KChoice::Fixed(k) if !(1..=MAX_K).contains(&k) => {
                Err(format!("k must be in 1..={MAX_K}, got {k}"))
            }
            other => Ok(other),
        }
    }
}

impl FromStr for KChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(KChoice::Auto);
        }
        s.parse::<usize>()
            .map_err(|_| format!("expected 1..={MAX_K} or \"auto\", got {s:?}"))
            .and_then(|k| KChoice::Fixed(k).checked())
    }
}

impl fmt::Display for KChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KChoice::Auto => f.write_str("auto"),
            KChoice::Fixed(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub k: KChoice,
    pub kmeans: KMeansOptions,
    pub min_completeness: f64,
    pub top_n: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            k: KChoice::Fixed(DEFAULT_K),
            kmeans: KMeansOptions::default(),
            min_completeness: DEFAULT_MIN_COMPLETENESS,
            top_n: DEFAULT_TOP_N,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.k.checked()?;
        if self.top_n == 0 {
            return Err("top-n must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.min_completeness) {
            return Err("min-completeness must be in [0, 1]".into());
        }
        if self.kmeans.restarts == 0 {
            return Err("restarts must be at least 1".into());
        }
        if self.kmeans.max_iters == 0 {
            return Err("max-iters must be at least 1".into());
        }
        if self.kmeans.tol.is_nan() || self.kmeans.tol < 0.0 {
            return Err("tol must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("unknown meter {0:?}")]
    UnknownMeter(String),
    #[error("no readings")]
    NoReadings,
    #[error("invalid analysis configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

impl PipelineError {
    /// True when more data would make the request succeed.
    pub fn is_insufficient_data(&self) -> bool {
        matches!(
            self,
            PipelineError::Analytics(AnalyticsError::TooFewProfiles { .. })
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeterAnalysis {
    pub meter_id: String,
    pub samples: Vec<PowerSample>,
    pub profiles: Vec<DailyProfile>,
    pub excluded: Vec<ExcludedDay>,
    /// Absent when there are fewer than six profiles.
    pub selection: Option<KSelectionReport>,
    pub model: ClusterModel,
    pub summary: ClusterSummary,
    pub anomalies: AnomalyReport,
}

/// Profiles, model and anomaly ranking from the active-energy register of one meter.
pub fn analyze_meter(
    store: &TelemetryStore,
    meter_id: &str,
    config: &AnalysisConfig,
) -> Result<MeterAnalysis, PipelineError> {
    config.validate().map_err(PipelineError::InvalidConfig)?;
    if store.is_empty() {
        return Err(PipelineError::NoReadings);
    }
    if !store.contains_meter(meter_id) {
        return Err(PipelineError::UnknownMeter(meter_id.to_string()));
    }
    let samples = store.full_power_series(meter_id, ObisCode::POSITIVE_ACTIVE);
    let (profiles, excluded) = build_daily_profiles(&samples, config.min_completeness);
    let selection = if profiles.len() >= MAX_K {
        Some(select_k(&profiles, &config.kmeans)?)
    } else {
        None
    };
    let k = match (config.k, &selection) {
        (KChoice::Fixed(k), _) => k,
        (KChoice::Auto, Some(report)) => report.recommended_k,
        (KChoice::Auto, None) => {
            return Err(AnalyticsError::TooFewProfiles {
                have: profiles.len(),
                need: MAX_K,
            }
            .into())
        }
    };
    let model = kmeans_fit(&profiles, k, &config.kmeans)?;
    let anomalies = anomaly_scores(&model, &profiles)?;
    let summary = mean_cluster_profiles(&model);
    Ok(MeterAnalysis {
        meter_id: meter_id.to_string(),
        samples,
        profiles,
        excluded,
        selection,
        model,
        summary,
        anomalies,
    })
}
