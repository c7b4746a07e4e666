//! Lloyd's k-means with k-means++ seeding and best-of-restarts selection.
//!
//! Each restart polishes its Lloyd fixed point with single-point moves, which
//! escapes many poor local optima on small inputs at little cost.
//!
//! Restart `r` draws from ChaCha8 stream `r` of the run seed, so restarts can
//! run in parallel and still pick the same winner as a sequential loop
//! (lowest inertia, then lowest restart index).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalyticsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansOptions {
    pub seed: u64,
    pub restarts: usize,
    pub max_iters: usize,
    /// Largest centroid move (W) still counted as converged.
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            restarts: 10,
            max_iters: 300,
            tol: 1e-6,
        }
    }
}

impl KMeansOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    pub restart: usize,
    /// Inertia after every Lloyd iteration.
    pub trace: Vec<f64>,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the closest centroid; ties go to the lowest index.
pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

pub fn inertia(points: &[Vec<f64>], centroids: &[Vec<f64>], labels: &[usize]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| squared_distance(p, &centroids[l]))
        .sum()
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    points.iter().map(|p| nearest(p, centroids).0).collect()
}

fn validate(points: &[Vec<f64>], k: usize) -> Result<usize, AnalyticsError> {
    if k == 0 {
        return Err(AnalyticsError::InvalidK(k));
    }
    if points.len() < k {
        return Err(AnalyticsError::TooFewProfiles {
            have: points.len(),
            need: k,
        });
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(AnalyticsError::DimensionMismatch {
            expected: dim,
            found: p.len(),
        });
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(AnalyticsError::NonFinite);
    }
    Ok(dim)
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// k-means++ seeding. Exactly one uniform draw per centroid, so scaling the
/// data leaves the chosen indices unchanged.
pub fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let first = ((rng.random::<f64>() * n as f64) as usize).min(n - 1);
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let u = rng.random::<f64>();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = u * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` just short of `target`; take the last candidate.
            chosen.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("total > 0"))
        } else {
            ((u * n as f64) as usize).min(n - 1)
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn means(
    points: &[Vec<f64>],
    labels: &[usize],
    previous: &[Vec<f64>],
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let dim = points[0].len();
    let k = previous.len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    let centroids = sums
        .into_iter()
        .zip(&counts)
        .zip(previous)
        .map(|((s, &c), prev)| {
            if c == 0 {
                prev.clone()
            } else {
                s.into_iter().map(|v| v / c as f64).collect()
            }
        })
        .collect();
    (centroids, counts)
}

/// Lloyd iterations from the given centroids until labels stop changing and
/// the last centroid move is below `tol`, or `max_iters` is reached.
///
/// An empty cluster takes over the point farthest from its centroid (among
/// clusters with two or more members). If every such point already sits on
/// its centroid the data has fewer distinct points than `k` and the cluster
/// stays empty.
pub fn lloyd(points: &[Vec<f64>], init: Vec<Vec<f64>>, max_iters: usize, tol: f64) -> KMeansFit {
    let mut centroids = init;
    let mut labels = assign(points, &centroids);
    let mut trace = vec![inertia(points, &centroids, &labels)];
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let (mut next, mut counts) = means(points, &labels, &centroids);
        let mut repaired = false;
        for empty in 0..next.len() {
            if counts[empty] > 0 {
                continue;
            }
            let donor = points
                .iter()
                .enumerate()
                .filter(|(i, _)| counts[labels[*i]] >= 2)
                .map(|(i, p)| (i, squared_distance(p, &next[labels[i]])))
                .filter(|(_, d)| *d > 0.0)
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            if let Some((i, _)) = donor {
                counts[labels[i]] -= 1;
                labels[i] = empty;
                counts[empty] = 1;
                next[empty] = points[i].clone();
                repaired = true;
            }
        }
        if repaired {
            next = means(points, &labels, &next).0;
        }
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| squared_distance(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        let new_labels = assign(points, &centroids);
        trace.push(inertia(points, &centroids, &new_labels));
        let stable = new_labels == labels;
        labels = new_labels;
        if stable && shift < tol {
            break;
        }
    }
    KMeansFit {
        inertia: inertia(points, &centroids, &labels),
        centroids,
        labels,
        iterations,
        restart: 0,
        trace,
    }
}

/// One pass of single-point moves (Hartigan). A point moves from cluster `a`
/// (size n_a ≥ 2) to `b` when n_b/(n_b+1)·‖x−c_b‖² < n_a/(n_a−1)·‖x−c_a‖²,
/// which lowers inertia by the difference. Returns whether anything moved.
fn hartigan_pass(points: &[Vec<f64>], labels: &mut [usize], k: usize) -> bool {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels.iter()) {
        counts[l] += 1;
        sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
    }
    let dist_to_mean = |p: &[f64], sum: &[f64], n: usize| {
        p.iter()
            .zip(sum)
            .map(|(x, s)| (x - s / n as f64).powi(2))
            .sum::<f64>()
    };
    let mut moved = false;
    for (i, p) in points.iter().enumerate() {
        let a = labels[i];
        let na = counts[a];
        if na < 2 {
            continue;
        }
        let removal = na as f64 / (na - 1) as f64 * dist_to_mean(p, &sums[a], na);
        let mut best: Option<(usize, f64)> = None;
        for b in (0..k).filter(|&b| b != a) {
            let nb = counts[b];
            let addition = if nb == 0 {
                0.0
            } else {
                nb as f64 / (nb + 1) as f64 * dist_to_mean(p, &sums[b], nb)
            };
            if addition < removal * (1.0 - 1e-12) && best.is_none_or(|(_, c)| addition < c) {
                best = Some((b, addition));
            }
        }
        if let Some((b, _)) = best {
            sums[a].iter_mut().zip(p).for_each(|(s, v)| *s -= v);
            sums[b].iter_mut().zip(p).for_each(|(s, v)| *s += v);
            counts[a] -= 1;
            counts[b] += 1;
            labels[i] = b;
            moved = true;
        }
    }
    moved
}

/// Lloyd to convergence, then alternating single-point moves and Lloyd until
/// neither changes the partition. Every step is non-increasing in inertia,
/// and the result is still a Lloyd fixed point.
pub fn refine(points: &[Vec<f64>], init: Vec<Vec<f64>>, max_iters: usize, tol: f64) -> KMeansFit {
    let mut fit = lloyd(points, init, max_iters, tol);
    for _ in 0..max_iters {
        let mut labels = fit.labels.clone();
        if !hartigan_pass(points, &mut labels, fit.centroids.len()) {
            break;
        }
        let (centroids, _) = means(points, &labels, &fit.centroids);
        let next = lloyd(points, centroids, max_iters, tol);
        fit.trace.extend(&next.trace);
        fit = KMeansFit {
            iterations: fit.iterations + next.iterations,
            trace: std::mem::take(&mut fit.trace),
            ..next
        };
    }
    fit
}

/// One seeded restart: k-means++ seeding then [`refine`].
pub fn kmeans_restart(
    points: &[Vec<f64>],
    k: usize,
    options: &KMeansOptions,
    restart: usize,
) -> Result<KMeansFit, AnalyticsError> {
    validate(points, k)?;
    let mut rng = restart_rng(options.seed, restart);
    let init = kmeans_plus_plus(points, k, &mut rng);
    Ok(KMeansFit {
        restart,
        ..refine(points, init, options.max_iters, options.tol)
    })
}

/// Best of `options.restarts` seeded restarts by inertia.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    options: &KMeansOptions,
) -> Result<KMeansFit, AnalyticsError> {
    validate(points, k)?;
    if options.restarts == 0 {
        return Err(AnalyticsError::InvalidOptions(
            "restarts must be positive".into(),
        ));
    }
    let fits: Vec<KMeansFit> = (0..options.restarts)
        .into_par_iter()
        .map(|r| kmeans_restart(points, k, options, r))
        .collect::<Result<_, _>>()?;
    Ok(fits
        .into_iter()
        .min_by(|a, b| {
            a.inertia
                .total_cmp(&b.inertia)
                .then(a.restart.cmp(&b.restart))
        })
        .expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(rows: &[&[f64]]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn two_points_two_clusters() {
        let points = pts(&[&[0.0; 96], &[10.0; 96]]);
        let fit = kmeans(&points, 2, &KMeansOptions::with_seed(1)).unwrap();
        assert_eq!(fit.inertia, 0.0);
        let mut cs = fit.centroids.clone();
        cs.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(cs, points);
    }

    #[test]
    fn single_cluster_is_mean() {
        let points = pts(&[&[1.0, 2.0], &[3.0, 6.0], &[5.0, 1.0]]);
        let fit = kmeans(&points, 1, &KMeansOptions::with_seed(3)).unwrap();
        assert_eq!(fit.centroids[0], vec![3.0, 3.0]);
        // Sum of squared deviations: x: 4+0+4, y: 1+9+4.
        assert!((fit.inertia - 22.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        let points = pts(&[&[1.0], &[2.0]]);
        assert!(matches!(
            kmeans(&points, 3, &KMeansOptions::default()),
            Err(AnalyticsError::TooFewProfiles { have: 2, need: 3 })
        ));
        assert!(matches!(
            kmeans(&points, 0, &KMeansOptions::default()),
            Err(AnalyticsError::InvalidK(0))
        ));
    }

    #[test]
    fn duplicates_leave_cluster_empty_without_looping() {
        let points = vec![vec![5.0; 4]; 10];
        let fit = kmeans(&points, 3, &KMeansOptions::with_seed(2)).unwrap();
        assert_eq!(fit.inertia, 0.0);
        assert!(fit.iterations < 5);
        assert!(fit.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn empty_cluster_repaired() {
        // Two centroids start on the same side; one of them gets no points.
        let points = pts(&[&[0.0], &[1.0], &[10.0], &[11.0]]);
        let fit = lloyd(&points, vec![vec![100.0], vec![50.0], vec![0.5]], 100, 1e-9);
        let mut counts = [0; 3];
        fit.labels.iter().for_each(|&l| counts[l] += 1);
        assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
        assert!(fit.trace.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    #[test]
    fn deterministic_across_calls() {
        let points: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i * 37 % 11) as f64, (i * 13 % 7) as f64])
            .collect();
        let a = kmeans(&points, 3, &KMeansOptions::with_seed(9)).unwrap();
        let b = kmeans(&points, 3, &KMeansOptions::with_seed(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_point_moves_escape_lloyd_optimum() {
        // Lloyd stops at {0,1} {10,11,30}; single moves reach {0,1,10,11} {30}.
        let points = pts(&[&[0.0], &[1.0], &[10.0], &[11.0], &[30.0]]);
        let stuck = lloyd(&points, vec![vec![0.5], vec![17.0]], 100, 1e-9);
        let better = refine(&points, vec![vec![0.5], vec![17.0]], 100, 1e-9);
        assert!((stuck.inertia - 254.5).abs() < 1e-9);
        assert!((better.inertia - 101.0).abs() < 1e-9);
        assert!(better.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let cs = vec![vec![1.0], vec![-1.0]];
        assert_eq!(nearest(&[0.0], &cs), (0, 1.0));
    }
}
