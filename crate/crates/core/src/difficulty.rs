//! Cluster difficulty scoring and the Easy / Medium / Hard manifest.
//!
//! Each cluster gets two statistics around its centroid: the mean squared
//! distance (`density_value`, lower means a tighter cluster) and the mean
//! Euclidean distance. Clusters are ordered by the sum of their ascending
//! ranks on both statistics, ties broken by mean distance and then cluster id,
//! and the ordered list is cut into three contiguous levels.

use std::cmp::Reverse;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embedding::EmbeddingMatrix;
use crate::kmeans::{ClusterModel, KmeansConfig};

#[derive(Debug, Error, PartialEq)]
pub enum DifficultyError {
    #[error("EmptyCluster: cluster {0} has no members")]
    EmptyCluster(usize),
    #[error("InconsistentInputs: {0}")]
    InconsistentInputs(String),
    #[error("InvalidManifest: {0}")]
    InvalidManifest(String),
}

type Result<T, E = DifficultyError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifficultyLevel {
    Easy,
    Medium,
    Hard,
}

impl DifficultyLevel {
    pub const ALL: [DifficultyLevel; 3] = [Self::Easy, Self::Medium, Self::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Easy => "easy",
            Self::Medium => "medium",
            Self::Hard => "hard",
        }
    }
}

impl fmt::Display for DifficultyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DifficultyLevel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "easy" => Ok(Self::Easy),
            "medium" => Ok(Self::Medium),
            "hard" => Ok(Self::Hard),
            other => Err(format!("unknown difficulty level {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub cluster_id: usize,
    pub size: usize,
    /// Mean squared distance to the centroid.
    pub density_value: f64,
    /// Mean Euclidean distance to the centroid.
    pub mean_distance: f64,
    /// Sum of the ascending (tie-averaged) ranks of the two statistics.
    pub composite_score: f64,
    /// Position in the easy-to-hard ordering, 0 = easiest.
    pub composite_rank: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelCounts {
    pub easy: usize,
    pub medium: usize,
    pub hard: usize,
}

impl LevelCounts {
    pub fn get(&self, level: DifficultyLevel) -> usize {
        match level {
            DifficultyLevel::Easy => self.easy,
            DifficultyLevel::Medium => self.medium,
            DifficultyLevel::Hard => self.hard,
        }
    }

    fn bump(&mut self, level: DifficultyLevel) {
        match level {
            DifficultyLevel::Easy => self.easy += 1,
            DifficultyLevel::Medium => self.medium += 1,
            DifficultyLevel::Hard => self.hard += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.easy + self.medium + self.hard
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSample {
    pub id: String,
    pub cluster: usize,
    pub level: DifficultyLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub k: usize,
    pub seed: u64,
    /// SHA-256 of the canonical JSON of the clustering config.
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumManifest {
    pub samples: Vec<ManifestSample>,
    pub clusters: Vec<ClusterStats>,
    pub level_counts: LevelCounts,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub fn config_hash(config: &KmeansConfig) -> String {
    sha256_hex(&serde_json::to_vec(config).expect("config serializes"))
}

/// Lowercase hex SHA-256, used for config and manifest fingerprints.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn compute_cluster_stats(matrix: &EmbeddingMatrix, model: &ClusterModel) -> Result<Vec<ClusterStats>> {
    model.check_against(matrix).map_err(|e| DifficultyError::InconsistentInputs(e.to_string()))?;
    let normalized;
    let matrix = if model.config.normalize {
        normalized = matrix.l2_normalized();
        &normalized
    } else {
        matrix
    };

    let k = model.k;
    let mut sizes = vec![0usize; k];
    let mut sq_sums = vec![0f64; k];
    let mut dist_sums = vec![0f64; k];
    for (row, &c) in matrix.rows().zip(&model.assignments) {
        let sq: f64 = row.iter().zip(&model.centroids[c]).map(|(&x, m)| (f64::from(x) - m) * (f64::from(x) - m)).sum();
        sizes[c] += 1;
        sq_sums[c] += sq;
        dist_sums[c] += sq.sqrt();
    }

    let mut stats = Vec::with_capacity(k);
    for c in 0..k {
        if sizes[c] == 0 {
            return Err(DifficultyError::EmptyCluster(c));
        }
        let size = sizes[c] as f64;
        stats.push(ClusterStats {
            cluster_id: c,
            size: sizes[c],
            density_value: sq_sums[c] / size,
            mean_distance: dist_sums[c] / size,
            composite_score: 0.0,
            composite_rank: 0,
        });
    }
    rank_clusters(&mut stats);
    Ok(stats)
}

/// 1-based ascending ranks, tied values sharing the mean of their positions.
fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0f64; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let shared = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = shared;
        }
        start = end;
    }
    ranks
}

/// Fills `composite_score` and `composite_rank`, and returns the indices of
/// `stats` sorted from easiest to hardest.
fn rank_clusters(stats: &mut [ClusterStats]) -> Vec<usize> {
    let density: Vec<f64> = stats.iter().map(|s| s.density_value).collect();
    let distance: Vec<f64> = stats.iter().map(|s| s.mean_distance).collect();
    let (rd, rm) = (fractional_ranks(&density), fractional_ranks(&distance));
    for (i, s) in stats.iter_mut().enumerate() {
        s.composite_score = rd[i] + rm[i];
    }
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&stats[a], &stats[b]);
        x.composite_score
            .total_cmp(&y.composite_score)
            .then(x.mean_distance.total_cmp(&y.mean_distance))
            .then(x.cluster_id.cmp(&y.cluster_id))
    });
    for (rank, &i) in order.iter().enumerate() {
        stats[i].composite_rank = rank;
    }
    order
}

/// Cut positions `(i, j)` splitting `sizes` (already in difficulty order)
/// into Easy `[0, i)`, Medium `[i, j)` and Hard `[j, m)`, all non-empty.
///
/// Minimizes the largest level sample count. Among equal maxima the largest
/// Easy group wins, then the earliest Medium/Hard cut.
pub fn best_three_way_split(sizes: &[usize]) -> (usize, usize) {
    let m = sizes.len();
    assert!(m >= 3, "three-way split needs at least three clusters");
    let prefix: Vec<usize> = std::iter::once(0)
        .chain(sizes.iter().scan(0, |acc, &s| {
            *acc += s;
            Some(*acc)
        }))
        .collect();
    let mut best: Option<(usize, Reverse<usize>, usize)> = None;
    for i in 1..m - 1 {
        for j in i + 1..m {
            let largest = prefix[i].max(prefix[j] - prefix[i]).max(prefix[m] - prefix[j]);
            let key = (largest, Reverse(i), j);
            if best.is_none_or(|b| key < b) {
                best = Some(key);
            }
        }
    }
    let (_, Reverse(i), j) = best.expect("m >= 3 yields at least one split");
    (i, j)
}

/// Maps every cluster to a difficulty level.
///
/// With fewer than three clusters the missing levels stay empty: one cluster
/// is Easy; two clusters are Easy and Hard.
pub fn assign_levels(stats: &[ClusterStats]) -> BTreeMap<usize, DifficultyLevel> {
    let mut ranked = stats.to_vec();
    let order = rank_clusters(&mut ranked);
    let ordered_ids: Vec<usize> = order.iter().map(|&i| ranked[i].cluster_id).collect();
    let mut levels = BTreeMap::new();
    match ordered_ids.len() {
        0 => {}
        1 => {
            levels.insert(ordered_ids[0], DifficultyLevel::Easy);
        }
        2 => {
            levels.insert(ordered_ids[0], DifficultyLevel::Easy);
            levels.insert(ordered_ids[1], DifficultyLevel::Hard);
        }
        _ => {
            let sizes: Vec<usize> = order.iter().map(|&i| ranked[i].size).collect();
            let (i, j) = best_three_way_split(&sizes);
            for (pos, &id) in ordered_ids.iter().enumerate() {
                let level = if pos < i {
                    DifficultyLevel::Easy
                } else if pos < j {
                    DifficultyLevel::Medium
                } else {
                    DifficultyLevel::Hard
                };
                levels.insert(id, level);
            }
        }
    }
    levels
}

pub fn build_manifest(
    matrix: &EmbeddingMatrix,
    model: &ClusterModel,
    levels: &BTreeMap<usize, DifficultyLevel>,
) -> Result<CurriculumManifest> {
    let clusters = compute_cluster_stats(matrix, model)?;
    if let Some(c) = (0..model.k).find(|c| !levels.contains_key(c)) {
        return Err(DifficultyError::InconsistentInputs(format!("cluster {c} has no difficulty level")));
    }
    if let Some(c) = levels.keys().find(|&&c| c >= model.k) {
        return Err(DifficultyError::InconsistentInputs(format!("level given for cluster {c}, but k = {}", model.k)));
    }

    let mut level_counts = LevelCounts::default();
    let samples = matrix
        .ids()
        .iter()
        .zip(&model.assignments)
        .map(|(id, &cluster)| {
            let level = levels[&cluster];
            level_counts.bump(level);
            ManifestSample { id: id.clone(), cluster, level }
        })
        .collect();

    let warnings = DifficultyLevel::ALL
        .iter()
        .filter(|&&l| level_counts.get(l) == 0)
        .map(|l| format!("level {l} is empty (k = {}); the scheduler will skip it", model.k))
        .collect::<Vec<_>>();
    for w in &warnings {
        log::warn!("{w}");
    }

    let manifest = CurriculumManifest {
        samples,
        clusters,
        level_counts,
        provenance: Provenance { k: model.k, seed: model.config.seed, config_hash: config_hash(&model.config) },
        warnings,
    };
    manifest.validate()?;
    Ok(manifest)
}

impl CurriculumManifest {
    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn level_of_cluster(&self) -> BTreeMap<usize, DifficultyLevel> {
        self.samples.iter().map(|s| (s.cluster, s.level)).collect()
    }

    pub fn ids_at(&self, level: DifficultyLevel) -> impl Iterator<Item = &str> + '_ {
        self.samples.iter().filter(move |s| s.level == level).map(|s| s.id.as_str())
    }

    /// Mean composite score of the clusters at each level, `None` for empty
    /// levels.
    pub fn mean_composite_by_level(&self) -> [Option<f64>; 3] {
        let by_cluster = self.level_of_cluster();
        let mut out = [None; 3];
        for (slot, level) in out.iter_mut().zip(DifficultyLevel::ALL) {
            let scores: Vec<f64> = self
                .clusters
                .iter()
                .filter(|c| by_cluster.get(&c.cluster_id) == Some(&level))
                .map(|c| c.composite_score)
                .collect();
            if !scores.is_empty() {
                *slot = Some(scores.iter().sum::<f64>() / scores.len() as f64);
            }
        }
        out
    }

    /// Checks every structural invariant; used on freshly built manifests and
    /// on manifests read back from disk.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DifficultyError::InvalidManifest(msg));
        if self.samples.is_empty() {
            return bad("manifest has no samples".into());
        }
        let mut ids = HashSet::with_capacity(self.samples.len());
        let mut cluster_level: BTreeMap<usize, DifficultyLevel> = BTreeMap::new();
        let mut counts = LevelCounts::default();
        for s in &self.samples {
            if s.id.is_empty() || !ids.insert(s.id.as_str()) {
                return bad(format!("sample id {:?} is empty or repeated", s.id));
            }
            if let Some(prev) = cluster_level.insert(s.cluster, s.level) {
                if prev != s.level {
                    return bad(format!("cluster {} spans levels {prev} and {}", s.cluster, s.level));
                }
            }
            counts.bump(s.level);
        }
        if counts != self.level_counts {
            return bad(format!("level_counts {:?} disagree with the samples ({:?})", self.level_counts, counts));
        }
        if self.clusters.len() != self.provenance.k {
            return bad(format!("{} cluster stats for k = {}", self.clusters.len(), self.provenance.k));
        }
        for (i, c) in self.clusters.iter().enumerate() {
            if c.cluster_id != i || c.size == 0 {
                return bad(format!("cluster stats entry {i} is malformed"));
            }
            if !(c.density_value >= 0.0 && c.mean_distance >= 0.0) {
                return bad(format!("cluster {i} has negative or NaN statistics"));
            }
        }
        if cluster_level.keys().any(|&c| c >= self.provenance.k) {
            return bad("sample refers to a cluster beyond k".into());
        }
        if self.provenance.k >= 3 && DifficultyLevel::ALL.iter().any(|&l| counts.get(l) == 0) {
            return bad("k >= 3 but a difficulty level is empty".into());
        }
        let means: Vec<f64> = self.mean_composite_by_level().into_iter().flatten().collect();
        if means.windows(2).any(|w| w[0] > w[1]) {
            return bad(format!("mean composite scores {means:?} are not ordered easy <= medium <= hard"));
        }
        Ok(())
    }
}
