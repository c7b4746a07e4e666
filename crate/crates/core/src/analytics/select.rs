use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans, nearest, refine, squared_distance, KMeansFit, KMeansOptions};
use super::{check_profiles, AnalyticsError, DailyProfile};
use crate::time::SLOTS_PER_DAY;

pub const MAX_K: usize = 6;

/// Recommended k is the smallest k whose inertia falls by less than this fraction at k+1.
pub const KNEE_DROP: f64 = 0.15;

/// Profiles closer than this (W, Euclidean over a day) are indistinguishable:
/// one meter count (1 Wh per slot, i.e. 4 W) in every slot.
pub const DEGENERATE_SPREAD_W: f64 = 4.0 * 9.797_958_971_132_712; // 4 × √96

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelectionReport {
    pub meter_id: String,
    /// Best inertia for k = 1..=6, in order.
    pub inertia: Vec<f64>,
    /// (I_k − I_{k+1}) / I_k for k = 1..=5; 0 where I_k is 0.
    pub relative_drops: Vec<f64>,
    pub max_pairwise_distance: f64,
    pub degenerate: bool,
    pub recommended_k: usize,
}

/// Fits k = 1..=6 and applies the knee rule.
///
/// Each k after the first also refines from the previous best centroids
/// plus the point farthest from them and keeps whichever result is lower, so
/// the inertia sequence never increases.
pub fn select_k(
    profiles: &[DailyProfile],
    options: &KMeansOptions,
) -> Result<KSelectionReport, AnalyticsError> {
    check_profiles(profiles)?;
    if profiles.len() < MAX_K {
        return Err(AnalyticsError::TooFewProfiles {
            have: profiles.len(),
            need: MAX_K,
        });
    }
    let points: Vec<Vec<f64>> = profiles.iter().map(|p| p.values.clone()).collect();

    let mut fits: Vec<KMeansFit> = Vec::with_capacity(MAX_K);
    for k in 1..=MAX_K {
        let mut best = kmeans(&points, k, options)?;
        if let Some(prev) = fits.last() {
            let warm = refine(
                &points,
                warm_start(&points, &prev.centroids),
                options.max_iters,
                options.tol,
            );
            if warm.inertia < best.inertia {
                best = warm;
            }
        }
        fits.push(best);
    }
    let inertia: Vec<f64> = fits.iter().map(|f| f.inertia).collect();
    let relative_drops: Vec<f64> = inertia
        .windows(2)
        .map(|w| {
            if w[0] > 0.0 {
                (w[0] - w[1]) / w[0]
            } else {
                0.0
            }
        })
        .collect();

    let max_pairwise_distance = max_pairwise_distance(&points);
    let degenerate = max_pairwise_distance < DEGENERATE_SPREAD_W;
    let recommended_k = if degenerate {
        1
    } else {
        (1..MAX_K)
            .find(|&k| inertia[k - 1] <= 0.0 || relative_drops[k - 1] < KNEE_DROP)
            .unwrap_or(MAX_K)
    };
    Ok(KSelectionReport {
        meter_id: profiles[0].meter_id.clone(),
        inertia,
        relative_drops,
        max_pairwise_distance,
        degenerate,
        recommended_k,
    })
}

fn warm_start(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut far = (0, -1.0);
    for (i, p) in points.iter().enumerate() {
        let d = nearest(p, centroids).1;
        if d > far.1 {
            far = (i, d);
        }
    }
    let mut init = centroids.to_vec();
    init.push(points[far.0].clone());
    init
}

fn max_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut best: f64 = 0.0;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max(squared_distance(a, b));
        }
    }
    debug_assert!(points.iter().all(|p| p.len() == SLOTS_PER_DAY));
    best.sqrt()
}
