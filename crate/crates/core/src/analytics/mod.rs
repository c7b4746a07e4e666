//! Daily load profiles, k-means clustering and distance-based anomaly ranking.

mod anomaly;
mod kmeans;
mod metrics;
mod profile;
mod select;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{slot_label, SLOTS_PER_DAY};

pub use anomaly::{anomaly_scores, robust_threshold, AnomalyReport, SCORE_REL_TOL, THRESHOLD_MADS};
pub use kmeans::{
    inertia, kmeans, kmeans_plus_plus, kmeans_restart, lloyd, nearest, refine, squared_distance,
    KMeansFit, KMeansOptions,
};
pub use metrics::adjusted_rand_index;
pub use profile::{build_daily_profiles, DailyProfile, ExcludedDay, ExclusionReason};
pub use select::{select_k, KSelectionReport, DEGENERATE_SPREAD_W, KNEE_DROP, MAX_K};

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("k must be between 1 and {MAX_K}, got {0}")]
    InvalidK(usize),
    #[error("insufficient data: {have} profiles, at least {need} required")]
    TooFewProfiles { have: usize, need: usize },
    #[error("profile for {day} has {len} values, expected 96")]
    ProfileLength { day: NaiveDate, len: usize },
    #[error("vectors of different length: {expected} and {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("profile values must be finite")]
    NonFinite,
    #[error("duplicate profile for {0}")]
    DuplicateDay(NaiveDate),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
}

/// A fitted clustering of daily profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub meter_id: String,
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: BTreeMap<NaiveDate, usize>,
    pub inertia: f64,
    pub seed: u64,
    pub restarts: usize,
    pub iterations: usize,
}

impl ClusterModel {
    /// Σ‖p − c_a(p)‖² over the given profiles that the model assigns.
    pub fn recompute_inertia(&self, profiles: &[DailyProfile]) -> f64 {
        profiles
            .iter()
            .filter_map(|p| {
                self.assignments
                    .get(&p.day)
                    .map(|&c| squared_distance(&p.values, &self.centroids[c]))
            })
            .sum()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in self.assignments.values() {
            sizes[c] += 1;
        }
        sizes
    }
}

pub(crate) fn check_profiles(profiles: &[DailyProfile]) -> Result<(), AnalyticsError> {
    let mut seen = BTreeSet::new();
    for p in profiles {
        if p.values.len() != SLOTS_PER_DAY {
            return Err(AnalyticsError::ProfileLength {
                day: p.day,
                len: p.values.len(),
            });
        }
        if p.values.iter().any(|v| !v.is_finite()) {
            return Err(AnalyticsError::NonFinite);
        }
        if !seen.insert(p.day) {
            return Err(AnalyticsError::DuplicateDay(p.day));
        }
    }
    Ok(())
}

fn model_from_fit(
    profiles: &[DailyProfile],
    k: usize,
    options: &KMeansOptions,
    fit: KMeansFit,
) -> ClusterModel {
    ClusterModel {
        meter_id: profiles[0].meter_id.clone(),
        k,
        assignments: profiles.iter().map(|p| p.day).zip(fit.labels).collect(),
        centroids: fit.centroids,
        inertia: fit.inertia,
        seed: options.seed,
        restarts: options.restarts,
        iterations: fit.iterations,
    }
}

/// Best-of-restarts k-means over daily profiles, k in 1..=6.
pub fn kmeans_fit(
    profiles: &[DailyProfile],
    k: usize,
    options: &KMeansOptions,
) -> Result<ClusterModel, AnalyticsError> {
    if !(1..=MAX_K).contains(&k) {
        return Err(AnalyticsError::InvalidK(k));
    }
    check_profiles(profiles)?;
    if profiles.len() < k {
        return Err(AnalyticsError::TooFewProfiles {
            have: profiles.len(),
            need: k,
        });
    }
    let points: Vec<Vec<f64>> = profiles.iter().map(|p| p.values.clone()).collect();
    let fit = kmeans(&points, k, options)?;
    Ok(model_from_fit(profiles, k, options, fit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterProfile {
    pub cluster: usize,
    pub centroid: Vec<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub clusters: Vec<ClusterProfile>,
    /// The most populated cluster; lowest index on ties.
    pub most_populated: usize,
}

pub fn mean_cluster_profiles(model: &ClusterModel) -> ClusterSummary {
    let sizes = model.cluster_sizes();
    let most_populated = sizes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    ClusterSummary {
        clusters: model
            .centroids
            .iter()
            .zip(sizes)
            .enumerate()
            .map(|(cluster, (centroid, count))| ClusterProfile {
                cluster,
                centroid: centroid.clone(),
                count,
            })
            .collect(),
        most_populated,
    }
}

/// Profiles as CSV: `meter_id,day` then one column per slot labelled by local start time.
pub fn write_profiles_csv<W: Write>(profiles: &[DailyProfile], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["meter_id".to_string(), "day".to_string()];
    header.extend((0..SLOTS_PER_DAY).map(slot_label));
    w.write_record(&header)?;
    for p in profiles {
        let mut row = vec![p.meter_id.clone(), p.day.to_string()];
        row.extend(p.values.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(i: u64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 6, 1).unwrap() + chrono::Days::new(i)
    }

    fn flat(i: u64, v: f64) -> DailyProfile {
        DailyProfile::new("m", day(i), vec![v; 96])
    }

    #[test]
    fn brute_force_three_values() {
        let profiles = vec![flat(0, 0.0), flat(1, 2.0), flat(2, 10.0)];
        let opts = KMeansOptions {
            restarts: 50,
            ..KMeansOptions::with_seed(5)
        };
        let m = kmeans_fit(&profiles, 2, &opts).unwrap();
        // {0,2} | {10}: 96 × (1 + 1) = 192.
        assert!((m.inertia - 192.0).abs() < 1e-9);
        assert_eq!(m.assignments[&day(0)], m.assignments[&day(1)]);
        assert_ne!(m.assignments[&day(0)], m.assignments[&day(2)]);
    }

    #[test]
    fn k_bounds() {
        let profiles: Vec<_> = (0..8).map(|i| flat(i, i as f64)).collect();
        assert_eq!(
            kmeans_fit(&profiles, 7, &KMeansOptions::default()),
            Err(AnalyticsError::InvalidK(7))
        );
        assert_eq!(
            kmeans_fit(&profiles, 0, &KMeansOptions::default()),
            Err(AnalyticsError::InvalidK(0))
        );
        assert!(matches!(
            kmeans_fit(&profiles[..2], 3, &KMeansOptions::default()),
            Err(AnalyticsError::TooFewProfiles { have: 2, need: 3 })
        ));
    }

    #[test]
    fn rejects_bad_profiles() {
        let mut bad = vec![flat(0, 1.0), flat(1, 2.0)];
        bad[1].values.pop();
        assert!(matches!(
            kmeans_fit(&bad, 1, &KMeansOptions::default()),
            Err(AnalyticsError::ProfileLength { len: 95, .. })
        ));
        let dup = vec![flat(0, 1.0), flat(0, 2.0)];
        assert_eq!(
            kmeans_fit(&dup, 1, &KMeansOptions::default()),
            Err(AnalyticsError::DuplicateDay(day(0)))
        );
    }

    #[test]
    fn summary_counts() {
        let profiles: Vec<_> = (0..6)
            .map(|i| flat(i, if i < 3 { 0.0 } else { 100.0 }))
            .collect();
        let m = kmeans_fit(&profiles, 2, &KMeansOptions::with_seed(1)).unwrap();
        let s = mean_cluster_profiles(&m);
        assert_eq!(s.clusters[0].count, 3);
        assert_eq!(s.clusters[1].count, 3);
        assert_eq!(s.most_populated, 0);

        let one = kmeans_fit(&profiles, 1, &KMeansOptions::with_seed(1)).unwrap();
        let s = mean_cluster_profiles(&one);
        assert_eq!(s.clusters[0].count, 6);
        assert_eq!(s.clusters[0].centroid, vec![50.0; 96]);
    }

    #[test]
    fn profiles_csv_has_96_value_columns() {
        let mut buf = Vec::new();
        write_profiles_csv(&[flat(0, 1.5)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header: Vec<_> = lines.next().unwrap().split(',').collect();
        assert_eq!(header.len(), 98);
        assert_eq!(header[2], "00:00");
        assert_eq!(header[97], "23:45");
        assert!(lines.next().unwrap().starts_with("m,2024-06-01,1.5,"));
    }

    #[test]
    fn model_json_round_trip() {
        let profiles: Vec<_> = (0..4).map(|i| flat(i, i as f64 * 0.1)).collect();
        let m = kmeans_fit(&profiles, 2, &KMeansOptions::with_seed(1)).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"2024-06-01\":"));
        assert_eq!(serde_json::from_str::<ClusterModel>(&json).unwrap(), m);
    }
}
