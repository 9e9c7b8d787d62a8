//! Lloyd's algorithm with k-means++ seeding and independent restarts.

use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed, Rng};

pub const DEFAULT_RESTARTS: usize = 100;
pub const DEFAULT_MAX_ITER: usize = 300;
const REL_TOL: f64 = 1e-10;

/// Result of a k-means fit. Labels are canonical: clusters are numbered in
/// order of first appearance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    /// K x d.
    pub centers: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Restarts that finished without an unrepairable empty cluster.
    pub restarts_used: usize,
    pub seed: u64,
}

impl ClusterAssignment {
    pub fn k(&self) -> usize {
        self.centers.len()
    }
}

struct Points<'a> {
    data: &'a [f64],
    n: usize,
    d: usize,
}

impl Points<'_> {
    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Assigns each point to its nearest center (lowest index on ties) and
/// returns the inertia.
fn assign(points: &Points, centers: &[f64], k: usize, labels: &mut [usize], dists: &mut [f64]) -> f64 {
    let d = points.d;
    let mut inertia = 0.0;
    for i in 0..points.n {
        let p = points.row(i);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            let dist = sq_dist(p, &centers[c * d..(c + 1) * d]);
            if dist < best_d {
                best_d = dist;
                best = c;
            }
        }
        labels[i] = best;
        dists[i] = best_d;
        inertia += best_d;
    }
    inertia
}

fn plus_plus_init(points: &Points, k: usize, rng: &mut Rng) -> Vec<f64> {
    let d = points.d;
    let mut centers = Vec::with_capacity(k * d);
    let first = rng.random_range(0..points.n);
    centers.extend_from_slice(points.row(first));
    let mut nearest: Vec<f64> = (0..points.n).map(|i| sq_dist(points.row(i), points.row(first))).collect();

    for _ in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = points.n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..points.n)
        };
        let c = centers.len();
        centers.extend_from_slice(points.row(pick));
        for i in 0..points.n {
            nearest[i] = nearest[i].min(sq_dist(points.row(i), &centers[c..c + d]));
        }
    }
    centers
}

struct Run {
    centers: Vec<f64>,
    labels: Vec<usize>,
    inertia: f64,
}

/// One seeded Lloyd run. `None` when an empty cluster cannot be repaired.
fn lloyd(points: &Points, k: usize, max_iter: usize, seed: u64) -> Option<Run> {
    let d = points.d;
    let mut rng = rng_from_seed(seed);
    let mut centers = plus_plus_init(points, k, &mut rng);
    let mut labels = vec![0; points.n];
    let mut dists = vec![0.0; points.n];
    let mut prev = f64::INFINITY;
    let mut repairs = 0;

    for _ in 0..max_iter {
        let inertia = assign(points, &centers, k, &mut labels, &mut dists);
        let converged = prev.is_finite() && (prev - inertia).abs() <= REL_TOL * prev;
        prev = inertia;
        if converged {
            break;
        }

        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for i in 0..points.n {
            let c = labels[i];
            counts[c] += 1;
            for (s, x) in sums[c * d..(c + 1) * d].iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for t in 0..d {
                    centers[c * d + t] = sums[c * d + t] / counts[c] as f64;
                }
                continue;
            }
            // Reseed at the point farthest from its current center.
            repairs += 1;
            let (far, far_d) = dists
                .iter()
                .copied()
                .enumerate()
                .fold((0, -1.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
            if far_d <= 0.0 || repairs > 10 * k {
                return None;
            }
            centers[c * d..(c + 1) * d].copy_from_slice(points.row(far));
            dists[far] = 0.0;
            prev = f64::INFINITY;
        }
    }

    let inertia = assign(points, &centers, k, &mut labels, &mut dists);
    let mut seen = vec![false; k];
    labels.iter().for_each(|&l| seen[l] = true);
    if seen.iter().any(|s| !s) {
        return None;
    }
    Some(Run { centers, labels, inertia })
}

/// Renumbers clusters by order of first appearance.
pub fn canonicalize_labels(labels: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut map: Vec<Option<usize>> = Vec::new();
    let mut order = Vec::new();
    let mut out = Vec::with_capacity(labels.len());
    for &l in labels {
        if l >= map.len() {
            map.resize(l + 1, None);
        }
        let id = *map[l].get_or_insert_with(|| {
            order.push(l);
            order.len() - 1
        });
        out.push(id);
    }
    (out, order)
}

/// Runs `restarts` seeded k-means fits on the rows of `points` and keeps the
/// one with the smallest inertia (earliest restart on ties).
pub fn kmeans(
    points: &DMatrix<f64>,
    k: usize,
    restarts: usize,
    max_iter: usize,
    seed: u64,
) -> Result<ClusterAssignment> {
    let (n, d) = points.shape();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("K = {k} with {n} points")));
    }
    if restarts == 0 || max_iter == 0 {
        return Err(Error::InvalidArgument("restarts and max_iter must be positive".into()));
    }
    let data: Vec<f64> = (0..n).flat_map(|i| points.row(i).iter().copied().collect::<Vec<_>>()).collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite coordinate in k-means input".into()));
    }
    let pts = Points { data: &data, n, d };

    let runs: Vec<Option<Run>> = (0..restarts)
        .into_par_iter()
        .map(|r| lloyd(&pts, k, max_iter, derive_seed(seed, r as u64)))
        .collect();
    let restarts_used = runs.iter().filter(|r| r.is_some()).count();
    let best = runs
        .into_iter()
        .flatten()
        .reduce(|best, run| if run.inertia < best.inertia { run } else { best })
        .ok_or_else(|| Error::EmptyCluster(format!("all {restarts} k-means restarts left a cluster empty")))?;

    let (labels, order) = canonicalize_labels(&best.labels);
    let centers = order.iter().map(|&c| best.centers[c * d..(c + 1) * d].to_vec()).collect();
    Ok(ClusterAssignment { labels, centers, inertia: best.inertia, restarts_used, seed })
}
