//! Lloyd's k-means with k-means++ or caller-supplied initialization.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::AlignError;
use crate::rng::rng_from_seed;

pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    PlusPlus,
    /// Start from these centroids (`c x d`); no resampling takes place.
    ExplicitCentroids(Array2<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    /// Sum of squared Euclidean distances from each point to its centroid.
    pub inertia: f64,
    /// Number of centroid updates performed.
    pub iterations: usize,
    /// Nearest-centroid assignments against the initial centroids.
    pub initial_assignments: Vec<usize>,
    /// Inertia after every centroid update; non-increasing.
    pub inertia_history: Vec<f64>,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }
}

pub fn kmeans_fit(
    x: ArrayView2<'_, f64>,
    c: usize,
    init: &InitSpec,
    seed: u64,
    max_iter: usize,
) -> Result<Clustering, AlignError> {
    let (n, d) = x.dim();
    if c == 0 {
        return Err(AlignError::InvalidConfig { field: "c", reason: "must be at least 1".into() });
    }
    if c > n {
        return Err(AlignError::TooFewPoints { clusters: c, points: n });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(AlignError::NonFiniteInput("k-means input"));
    }

    let mut centroids = match init {
        InitSpec::PlusPlus => plus_plus(x, c, seed),
        InitSpec::ExplicitCentroids(given) => {
            if given.dim() != (c, d) {
                return Err(AlignError::ShapeMismatch(format!(
                    "initial centroids are {:?}, expected ({c}, {d})",
                    given.dim()
                )));
            }
            if given.iter().any(|v| !v.is_finite()) {
                return Err(AlignError::NonFiniteInput("initial centroids"));
            }
            given.clone()
        }
    };

    let point_norms: Array1<f64> = x.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut assignments = assign_nearest(x, centroids.view(), &point_norms);
    let initial_assignments = assignments.clone();
    let mut history = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iter.max(1) {
        iterations += 1;
        repair_empty(x, &mut assignments, centroids.view(), c);
        centroids = cluster_means(x, &assignments, c);
        history.push(inertia(x, centroids.view(), &assignments));
        let next = assign_nearest(x, centroids.view(), &point_norms);
        if next == assignments {
            break;
        }
        assignments = next;
    }
    // The loop can stop on max_iter with assignments that moved after the last
    // update; refresh means so the result is self-consistent.
    if cluster_means(x, &assignments, c) != centroids {
        repair_empty(x, &mut assignments, centroids.view(), c);
        centroids = cluster_means(x, &assignments, c);
        history.push(inertia(x, centroids.view(), &assignments));
    }

    Ok(Clustering {
        inertia: *history.last().expect("at least one update"),
        centroids,
        assignments,
        iterations,
        initial_assignments,
        inertia_history: history,
    })
}

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// k-means++ seeding: first centroid uniform, the rest sampled with
/// probability proportional to squared distance from the nearest chosen one.
fn plus_plus(x: ArrayView2<'_, f64>, c: usize, seed: u64) -> Array2<f64> {
    let (n, d) = x.dim();
    let mut rng = rng_from_seed(seed);
    let mut centroids = Array2::<f64>::zeros((c, d));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&x.row(first));
    let mut closest: Vec<f64> = x.rows().into_iter().map(|r| sq_dist(r, x.row(first))).collect();

    for j in 1..c {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in closest.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(j).assign(&x.row(pick));
        for (i, row) in x.rows().into_iter().enumerate() {
            let dist = sq_dist(row, x.row(pick));
            if dist < closest[i] {
                closest[i] = dist;
            }
        }
    }
    centroids
}

/// Nearest centroid per row, lowest index on ties.
fn assign_nearest(x: ArrayView2<'_, f64>, centroids: ArrayView2<'_, f64>, point_norms: &Array1<f64>) -> Vec<usize> {
    let cross = x.dot(&centroids.t());
    let centroid_norms: Vec<f64> = centroids.rows().into_iter().map(|r| r.dot(&r)).collect();
    cross
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let mut best = 0;
            let mut best_dist = f64::INFINITY;
            for (j, &dot) in row.iter().enumerate() {
                let dist = point_norms[i] - 2.0 * dot + centroid_norms[j];
                if dist < best_dist {
                    best_dist = dist;
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Gives every empty cluster the point farthest from its current centroid,
/// taken from a cluster that can spare one.
fn repair_empty(x: ArrayView2<'_, f64>, assignments: &mut [usize], centroids: ArrayView2<'_, f64>, c: usize) {
    let mut counts = vec![0usize; c];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    if counts.iter().all(|&n| n > 0) {
        return;
    }
    let mut dist: Vec<f64> = assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| sq_dist(x.row(i), centroids.row(a)))
        .collect();
    for empty in 0..c {
        if counts[empty] > 0 {
            continue;
        }
        let mut far = None;
        for (i, &a) in assignments.iter().enumerate() {
            if counts[a] > 1 && far.is_none_or(|f: usize| dist[i] > dist[f]) {
                far = Some(i);
            }
        }
        // c <= n guarantees some cluster holds at least two points.
        let i = far.expect("a cluster with a spare point");
        counts[assignments[i]] -= 1;
        assignments[i] = empty;
        counts[empty] = 1;
        dist[i] = 0.0;
    }
}

fn cluster_means(x: ArrayView2<'_, f64>, assignments: &[usize], c: usize) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros((c, x.ncols()));
    let mut counts = vec![0usize; c];
    for (row, &a) in x.axis_iter(Axis(0)).zip(assignments) {
        let mut target = sums.row_mut(a);
        target += &row;
        counts[a] += 1;
    }
    for (mut row, &count) in sums.rows_mut().into_iter().zip(&counts) {
        if count > 0 {
            let inv = 1.0 / count as f64;
            row.mapv_inplace(|v| v * inv);
        }
    }
    sums
}

fn inertia(x: ArrayView2<'_, f64>, centroids: ArrayView2<'_, f64>, assignments: &[usize]) -> f64 {
    x.rows()
        .into_iter()
        .zip(assignments)
        .map(|(row, &a)| sq_dist(row, centroids.row(a)))
        .sum()
}
