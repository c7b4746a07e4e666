use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::kmeans::nearest;
use super::{check_profiles, AnalyticsError, ClusterModel, DailyProfile};

/// Days scoring more than this many scaled MADs above the median are flagged.
pub const THRESHOLD_MADS: f64 = 3.0;

/// MAD scale factor making it consistent with σ for normal data.
const MAD_TO_SIGMA: f64 = 1.4826;

/// Scores this close (relative) are ties. Distances that are equal in exact
/// arithmetic, such as both members of a two-day cluster, differ in the last
/// bits, and those bits change when the data is rescaled.
pub const SCORE_REL_TOL: f64 = 1e-9;

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= SCORE_REL_TOL * a.abs().max(b.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub meter_id: String,
    pub k: usize,
    /// Euclidean distance (W) to the nearest centroid.
    pub scores: BTreeMap<NaiveDate, f64>,
    pub nearest_cluster: BTreeMap<NaiveDate, usize>,
    /// Highest score first; earlier date first on ties.
    pub ranked_days: Vec<NaiveDate>,
    pub threshold: f64,
    /// Days scoring above `threshold`, in ranking order; always a prefix of `ranked_days`.
    pub flagged: Vec<NaiveDate>,
}

impl AnomalyReport {
    pub fn top(&self, n: usize) -> &[NaiveDate] {
        &self.ranked_days[..n.min(self.ranked_days.len())]
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// median + 3 × 1.4826 × MAD. Unlike mean + 3σ, a handful of outliers cannot
/// raise the threshold above themselves.
pub fn robust_threshold(scores: &[f64]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let med = median(&sorted);
    let mut dev: Vec<f64> = sorted.iter().map(|s| (s - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    med + THRESHOLD_MADS * MAD_TO_SIGMA * median(&dev)
}

/// Scores every profile by distance to its nearest centroid. The threshold is
/// computed over the scored days the model was fit on (all scored days if
/// none of them were).
pub fn anomaly_scores(
    model: &ClusterModel,
    profiles: &[DailyProfile],
) -> Result<AnomalyReport, AnalyticsError> {
    check_profiles(profiles)?;
    let mut scores = BTreeMap::new();
    let mut nearest_cluster = BTreeMap::new();
    for p in profiles {
        let (c, d2) = nearest(&p.values, &model.centroids);
        scores.insert(p.day, d2.sqrt());
        nearest_cluster.insert(p.day, c);
    }

    let mut ranked_days: Vec<NaiveDate> = scores.keys().copied().collect();
    ranked_days.sort_by(|a, b| scores[b].total_cmp(&scores[a]).then(a.cmp(b)));
    let mut groups = Vec::new();
    let mut i = 0;
    while i < ranked_days.len() {
        let mut j = i + 1;
        while j < ranked_days.len() && near(scores[&ranked_days[j - 1]], scores[&ranked_days[j]]) {
            j += 1;
        }
        ranked_days[i..j].sort();
        groups.push(i..j);
        i = j;
    }

    let fitted: Vec<f64> = scores
        .iter()
        .filter(|(d, _)| model.assignments.contains_key(d))
        .map(|(_, s)| *s)
        .collect();
    let threshold = if fitted.is_empty() {
        robust_threshold(&scores.values().copied().collect::<Vec<_>>())
    } else {
        robust_threshold(&fitted)
    };
    let mut flagged = Vec::new();
    for g in groups {
        let top = ranked_days[g.clone()]
            .iter()
            .map(|d| scores[d])
            .fold(f64::MIN, f64::max);
        if top > threshold && !near(top, threshold) {
            flagged.extend_from_slice(&ranked_days[g]);
        } else {
            break;
        }
    }

    Ok(AnomalyReport {
        meter_id: model.meter_id.clone(),
        k: model.k,
        scores,
        nearest_cluster,
        ranked_days,
        threshold,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Days;

    fn day(i: u64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 6, 1).unwrap() + Days::new(i)
    }

    fn model(centroids: Vec<Vec<f64>>) -> ClusterModel {
        ClusterModel {
            meter_id: "m".into(),
            k: centroids.len(),
            centroids,
            assignments: BTreeMap::new(),
            inertia: 0.0,
            seed: 0,
            restarts: 1,
            iterations: 0,
        }
    }

    #[test]
    fn single_slot_distance() {
        let mut values = vec![0.0; 96];
        values[40] = 500.0;
        let r = anomaly_scores(
            &model(vec![vec![0.0; 96]]),
            &[DailyProfile::new("m", day(0), values)],
        )
        .unwrap();
        assert_eq!(r.scores[&day(0)], 500.0);
    }

    #[test]
    fn centroid_scores_zero_and_ties_by_date() {
        let m = model(vec![vec![1.0; 96], vec![3.0; 96]]);
        let profiles = vec![
            DailyProfile::new("m", day(2), vec![2.0; 96]),
            DailyProfile::new("m", day(1), vec![1.0; 96]),
            DailyProfile::new("m", day(0), vec![2.0; 96]),
        ];
        let r = anomaly_scores(&m, &profiles).unwrap();
        assert_eq!(r.scores[&day(1)], 0.0);
        assert_eq!(r.ranked_days, vec![day(0), day(2), day(1)]);
        // Equidistant from both centroids: lowest index.
        assert_eq!(r.nearest_cluster[&day(0)], 0);
    }

    #[test]
    fn wrong_length_rejected() {
        let m = model(vec![vec![0.0; 96]]);
        let err = anomaly_scores(&m, &[DailyProfile::new("m", day(0), vec![0.0; 95])]).unwrap_err();
        assert_eq!(
            err,
            AnalyticsError::ProfileLength {
                day: day(0),
                len: 95
            }
        );
    }

    #[test]
    fn near_ties_ranked_by_date() {
        let m = model(vec![vec![0.0; 96]]);
        let mut a = vec![0.0; 96];
        a[0] = 300.0;
        let mut b = vec![0.0; 96];
        b[0] = 300.0 * (1.0 + 1e-14);
        let r = anomaly_scores(
            &m,
            &[
                DailyProfile::new("m", day(1), b),
                DailyProfile::new("m", day(0), a),
            ],
        )
        .unwrap();
        assert_eq!(r.ranked_days, vec![day(0), day(1)]);
    }

    #[test]
    fn robust_threshold_oracle() {
        // median 3, deviations {2,1,0,1,97} → MAD 1.
        let t = robust_threshold(&[1.0, 2.0, 3.0, 4.0, 100.0]);
        assert!((t - (3.0 + 3.0 * 1.4826)).abs() < 1e-12);
    }

    #[test]
    fn outliers_flagged_as_prefix() {
        let m = model(vec![vec![0.0; 96]]);
        let profiles: Vec<_> = (0..30)
            .map(|i| {
                let v = if i % 10 == 3 {
                    400.0
                } else {
                    10.0 + (i % 4) as f64
                };
                DailyProfile::new("m", day(i), vec![v; 96])
            })
            .collect();
        let r = anomaly_scores(&m, &profiles).unwrap();
        assert_eq!(r.flagged, vec![day(3), day(13), day(23)]);
        assert_eq!(&r.ranked_days[..3], &r.flagged[..]);
    }
}
