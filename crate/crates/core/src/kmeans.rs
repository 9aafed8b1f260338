//! Lloyd's k-means with k-means++ seeding.
//!
//! `n_init` seedings are run back to back from one PRNG stream and the
//! lowest-WCSS run is kept (ties keep the earlier run).
//!
//! All distance and mean computations accumulate in `f64`, in sample index
//! order, so the result is bit-reproducible for a given matrix and config.
//! Clusters emptied by an assignment step are repaired by moving in the
//! sample farthest from its own centroid, which keeps the objective
//! non-increasing from one iteration to the next.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingMatrix;
use crate::rng::XorShift64Star;

#[derive(Debug, Error, PartialEq)]
pub enum KmeansError {
    #[error("KTooLarge: k = {k} exceeds sample count n = {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KmeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Relative WCSS change below which iteration stops.
    pub tol: f64,
    /// L2-normalize every embedding before clustering.
    pub normalize: bool,
    /// Number of k-means++ restarts.
    #[serde(default = "default_n_init")]
    pub n_init: usize,
}

fn default_n_init() -> usize {
    10
}

impl Default for KmeansConfig {
    fn default() -> Self {
        Self { k: 3, seed: 0, max_iters: 100, tol: 1e-6, normalize: false, n_init: default_n_init() }
    }
}

impl KmeansConfig {
    pub fn validate(&self) -> Result<(), KmeansError> {
        if self.k == 0 {
            return Err(KmeansError::InvalidConfig("k must be at least 1".into()));
        }
        if self.n_init == 0 {
            return Err(KmeansError::InvalidConfig("n_init must be at least 1".into()));
        }
        if self.max_iters == 0 {
            return Err(KmeansError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(KmeansError::InvalidConfig(format!("tol must be a positive finite number, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Result of [`fit_kmeans`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub wcss: f64,
    pub iterations_run: usize,
    pub converged: bool,
    pub ids: Vec<String>,
    pub config: KmeansConfig,
    /// Set when the input has fewer than `k` distinct points, so some
    /// centroids necessarily coincide.
    pub degenerate: bool,
    /// WCSS after each Lloyd iteration of the kept run.
    #[serde(default, skip_serializing)]
    pub wcss_history: Vec<f64>,
}

impl ClusterModel {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Checks shape consistency against a matrix (used after deserializing).
    pub fn check_against(&self, matrix: &EmbeddingMatrix) -> Result<(), KmeansError> {
        if self.centroids.len() != self.k {
            return Err(KmeansError::ShapeMismatch(format!("{} centroids for k = {}", self.centroids.len(), self.k)));
        }
        if let Some(c) = self.centroids.iter().position(|c| c.len() != matrix.d()) {
            return Err(KmeansError::ShapeMismatch(format!(
                "centroid {c} has dimension {}, embeddings have {}",
                self.centroids[c].len(),
                matrix.d()
            )));
        }
        if self.assignments.len() != matrix.n() || self.ids.len() != matrix.n() {
            return Err(KmeansError::ShapeMismatch(format!(
                "model covers {} samples, matrix has {}",
                self.assignments.len(),
                matrix.n()
            )));
        }
        if let Some(row) = self.ids.iter().zip(matrix.ids()).position(|(a, b)| a != b) {
            return Err(KmeansError::ShapeMismatch(format!(
                "sample id mismatch at row {row}: model {:?}, matrix {:?}",
                self.ids[row],
                matrix.ids()[row]
            )));
        }
        if let Some(i) = self.assignments.iter().position(|&a| a >= self.k) {
            return Err(KmeansError::ShapeMismatch(format!(
                "assignment {} at row {i} is out of range for k = {}",
                self.assignments[i], self.k
            )));
        }
        Ok(())
    }
}

/// Row-major `f64` copy of the clustering input.
struct Points {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl Points {
    fn from_matrix(matrix: &EmbeddingMatrix) -> Self {
        Self { n: matrix.n(), d: matrix.d(), data: matrix.data().iter().map(|&v| f64::from(v)).collect() }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[f64], d: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(d).enumerate() {
        let dist = sq_dist(point, centroid);
        if dist < best.1 {
            best = (c, dist);
        }
    }
    best
}

fn wcss_of(points: &Points, centroids: &[f64], assignments: &[usize]) -> f64 {
    let d = points.d;
    assignments.iter().enumerate().map(|(i, &c)| sq_dist(points.row(i), &centroids[c * d..(c + 1) * d])).sum()
}

/// Total within-cluster sum of squared Euclidean distances.
pub fn compute_wcss(
    matrix: &EmbeddingMatrix,
    centroids: &[Vec<f64>],
    assignments: &[usize],
) -> Result<f64, KmeansError> {
    if assignments.len() != matrix.n() {
        return Err(KmeansError::ShapeMismatch(format!(
            "{} assignments for {} samples",
            assignments.len(),
            matrix.n()
        )));
    }
    if let Some(c) = centroids.iter().position(|c| c.len() != matrix.d()) {
        return Err(KmeansError::ShapeMismatch(format!(
            "centroid {c} has dimension {}, expected {}",
            centroids[c].len(),
            matrix.d()
        )));
    }
    if let Some(i) = assignments.iter().position(|&a| a >= centroids.len()) {
        return Err(KmeansError::ShapeMismatch(format!("assignment {} at row {i} has no centroid", assignments[i])));
    }
    let flat: Vec<f64> = centroids.iter().flatten().copied().collect();
    Ok(wcss_of(&Points::from_matrix(matrix), &flat, assignments))
}

/// k-means++: first centre uniform, each further centre drawn with
/// probability proportional to its squared distance from the nearest chosen
/// centre. If every remaining distance is zero the lowest unchosen index is
/// taken.
fn kmeans_plus_plus(points: &Points, k: usize, rng: &mut XorShift64Star) -> Vec<f64> {
    let d = points.d;
    let mut chosen = Vec::with_capacity(k);
    let first = rng.next_below(points.n);
    chosen.push(first);
    let mut min_dist: Vec<f64> = (0..points.n).map(|i| sq_dist(points.row(i), points.row(first))).collect();

    while chosen.len() < k {
        let total: f64 = min_dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in min_dist.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            (0..points.n).find(|i| !chosen.contains(i)).expect("k <= n leaves an unchosen index")
        };
        chosen.push(next);
        for (i, m) in min_dist.iter_mut().enumerate() {
            *m = m.min(sq_dist(points.row(i), points.row(next)));
        }
    }

    let mut centroids = Vec::with_capacity(k * d);
    for &i in &chosen {
        centroids.extend_from_slice(points.row(i));
    }
    centroids
}

fn distinct_rows(matrix: &EmbeddingMatrix) -> usize {
    let mut rows: Vec<Vec<u32>> = matrix.rows().map(|r| r.iter().map(|&v| (v + 0.0).to_bits()).collect()).collect();
    rows.sort_unstable();
    rows.dedup();
    rows.len()
}

pub fn fit_kmeans(matrix: &EmbeddingMatrix, config: &KmeansConfig) -> Result<ClusterModel, KmeansError> {
    config.validate()?;
    let (n, k) = (matrix.n(), config.k);
    if k > n {
        return Err(KmeansError::KTooLarge { k, n });
    }
    let input: Cow<'_, EmbeddingMatrix> =
        if config.normalize { Cow::Owned(matrix.l2_normalized()) } else { Cow::Borrowed(matrix) };
    let degenerate = distinct_rows(&input) < k;
    if degenerate {
        log::warn!("DegenerateInput: fewer than k = {k} distinct points; centroids will coincide");
    }

    let points = Points::from_matrix(&input);
    let d = points.d;
    let mut rng = XorShift64Star::new(config.seed);
    let mut best: Option<LloydRun> = None;
    for _ in 0..config.n_init {
        let run = lloyd(&points, config, &mut rng);
        if best.as_ref().is_none_or(|b| run.wcss() < b.wcss()) {
            best = Some(run);
        }
    }
    let LloydRun { centroids, assignments, history, converged } = best.expect("n_init >= 1");

    let wcss = *history.last().expect("max_iters >= 1");
    Ok(ClusterModel {
        k,
        centroids: centroids.chunks_exact(d).map(<[f64]>::to_vec).collect(),
        assignments,
        wcss,
        iterations_run: history.len(),
        converged,
        ids: matrix.ids().to_vec(),
        config: config.clone(),
        degenerate,
        wcss_history: history,
    })
}

struct LloydRun {
    centroids: Vec<f64>,
    assignments: Vec<usize>,
    history: Vec<f64>,
    converged: bool,
}

impl LloydRun {
    fn wcss(&self) -> f64 {
        *self.history.last().expect("max_iters >= 1")
    }
}

fn lloyd(points: &Points, config: &KmeansConfig, rng: &mut XorShift64Star) -> LloydRun {
    let (n, d, k) = (points.n, points.d, config.k);
    let mut centroids = kmeans_plus_plus(points, k, rng);
    let mut assignments = vec![0usize; n];
    let mut dists = vec![0f64; n];
    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;

    for _ in 0..config.max_iters {
        for i in 0..n {
            let (c, dist) = nearest(points.row(i), &centroids, d);
            assignments[i] = c;
            dists[i] = dist;
        }
        repair_empty_clusters(points, &mut centroids, &mut assignments, &mut dists, k);
        centroids = cluster_means(points, &assignments, k);
        let wcss = wcss_of(points, &centroids, &assignments);

        let done = match history.last() {
            _ if wcss == 0.0 => true,
            Some(&prev) => (prev - wcss).abs() / prev.max(f64::MIN_POSITIVE) < config.tol,
            None => false,
        };
        history.push(wcss);
        if done {
            converged = true;
            break;
        }
    }
    LloydRun { centroids, assignments, history, converged }
}

/// Gives every empty cluster the sample farthest from its current centroid,
/// taken from a cluster that keeps at least one member. Ties go to the lowest
/// sample index.
fn repair_empty_clusters(
    points: &Points,
    centroids: &mut [f64],
    assignments: &mut [usize],
    dists: &mut [f64],
    k: usize,
) {
    let d = points.d;
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut donor: Option<usize> = None;
        for i in 0..points.n {
            if sizes[assignments[i]] < 2 {
                continue;
            }
            if donor.is_none_or(|j| dists[i] > dists[j]) {
                donor = Some(i);
            }
        }
        let i = donor.expect("k <= n guarantees a cluster with two members");
        sizes[assignments[i]] -= 1;
        sizes[empty] = 1;
        assignments[i] = empty;
        dists[i] = 0.0;
        centroids[empty * d..(empty + 1) * d].copy_from_slice(points.row(i));
        log::debug!("reseeded empty cluster {empty} with sample {i}");
    }
}

fn cluster_means(points: &Points, assignments: &[usize], k: usize) -> Vec<f64> {
    let d = points.d;
    let mut sums = vec![0f64; k * d];
    let mut counts = vec![0usize; k];
    for (i, &c) in assignments.iter().enumerate() {
        counts[c] += 1;
        for (s, v) in sums[c * d..(c + 1) * d].iter_mut().zip(points.row(i)) {
            *s += v;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        for s in &mut sums[c * d..(c + 1) * d] {
            *s /= count as f64;
        }
    }
    sums
}
