//! Lloyd's k-means with k-means++ seeding.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after every completed Lloyd iteration.
    pub history: Vec<f64>,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn distinct_count(points: &[Vec<f64>]) -> usize {
    points
        .iter()
        .map(|p| p.iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        .collect::<BTreeSet<_>>()
        .len()
}

/// Index of the nearest centroid; equidistant ties go to the lowest index.
pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.below(points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.uniform() * total;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        let c = points[pick].clone();
        for (dist, p) in d2.iter_mut().zip(points) {
            *dist = dist.min(squared_distance(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn inertia_of(points: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum()
}

/// Cluster `points` into `k` groups.
///
/// Stops at an assignment fixpoint, when inertia improves by less than `tol`,
/// or after `max_iters` iterations. An empty cluster takes the point farthest
/// from its current centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iters: usize, tol: f64) -> Result<KMeansResult> {
    if points.is_empty() {
        return Err(Error::Empty("points"));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            got: p.len(),
        });
    }
    let distinct = distinct_count(points);
    if k > distinct {
        return Err(Error::TooManyClusters { k, distinct });
    }

    let mut rng = SeededRng::new(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    let mut history = Vec::new();

    for iter in 0..max_iters.max(1) {
        if iter > 0 {
            // Move a point only on strict improvement so exact ties cannot
            // oscillate.
            let mut changed = false;
            for (p, a) in points.iter().zip(assignments.iter_mut()) {
                let candidate = nearest(p, &centroids);
                if candidate != *a && squared_distance(p, &centroids[candidate]) < squared_distance(p, &centroids[*a]) {
                    *a = candidate;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        repair_empty(points, &mut assignments, &centroids, k);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
            for (ci, si) in c.iter_mut().zip(s) {
                *ci = si / n as f64;
            }
        }
        let inertia = inertia_of(points, &assignments, &centroids);
        let improved = history.last().map(|&prev: &f64| prev - inertia);
        history.push(inertia);
        if matches!(improved, Some(delta) if delta < tol) {
            break;
        }
    }

    let inertia = inertia_of(points, &assignments, &centroids);
    Ok(KMeansResult {
        assignments,
        centroids,
        inertia,
        history,
    })
}

fn repair_empty(points: &[Vec<f64>], assignments: &mut [usize], centroids: &[Vec<f64>], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignments.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        // Farthest point among clusters that can spare one.
        let donor = (0..points.len())
            .filter(|&i| counts[assignments[i]] > 1)
            .max_by(|&i, &j| {
                let di = squared_distance(&points[i], &centroids[assignments[i]]);
                let dj = squared_distance(&points[j], &centroids[assignments[j]]);
                di.total_cmp(&dj).then(j.cmp(&i))
            })
            .expect("k <= number of points");
        assignments[donor] = empty;
    }
}
