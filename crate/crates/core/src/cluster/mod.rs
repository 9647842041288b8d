//! K-Means and complete-linkage agglomerative clustering on the unit sphere,
//! silhouette-driven choice of the cluster count, and the two-step
//! same-verb / cross-verb pipeline.
//!
//! All clustering happens on unit-normalized 64-bit copies of the input
//! embeddings, so squared Euclidean distance equals twice the cosine
//! distance and both algorithms see the same geometry.

mod hac;
mod kmeans;
mod pipeline;
mod select;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Embedding, ModelError};

pub use hac::{hac_complete, Dendrogram, Merge};
pub use kmeans::{KMeans, KMeansFit};
pub use pipeline::{
    ratio_cluster_count, recluster_step1, run_two_step, step1_same_verb, step2_cross_verb, Step1Result, Step2Result,
};
pub use select::{select_k, Selection};

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("cannot cluster an empty point set")]
    EmptyInput,
    #[error("requested {k} clusters but only {n} points")]
    TooManyClusters { k: usize, n: usize },
    #[error("cluster count must be at least 1")]
    ZeroClusters,
    #[error("duplicate pair ({image}, {verb})")]
    DuplicatePair { image: String, verb: String },
    #[error(
        "no ratio in the grid yields a feasible cluster count \
         ({step1_clusters} Step-1 clusters, lexicon size {lexicon_size})"
    )]
    NoFeasibleRatio { step1_clusters: usize, lexicon_size: usize },
    #[error("invalid clustering configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Kmeans,
    Hac,
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "kmeans" | "k-means" => Ok(Algorithm::Kmeans),
            "hac" => Ok(Algorithm::Hac),
            other => Err(format!("unknown algorithm {other:?} (expected kmeans or hac)")),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Kmeans => "kmeans",
            Algorithm::Hac => "hac",
        })
    }
}

/// Knobs for both clustering steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub algorithm: Algorithm,
    /// Candidate cluster counts for Step 1.
    pub k_range: Vec<usize>,
    /// Candidate ratios `r` for Step 2; the cluster count is `trunc(lexicon_size * r)`.
    pub ratio_grid: Vec<f64>,
    pub seed: u64,
    pub kmeans_restarts: usize,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Kmeans,
            k_range: (2..=16).collect(),
            ratio_grid: default_ratio_grid(),
            seed: 0,
            kmeans_restarts: 10,
            max_iters: 300,
            tolerance: 1e-6,
        }
    }
}

/// `{0.6, 0.7, ..., 1.6}`, both ends included.
pub fn default_ratio_grid() -> Vec<f64> {
    (6..=16).map(|i| f64::from(i) / 10.0).collect()
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        let bad = |m: &str| Err(ClusterError::InvalidConfig(m.to_string()));
        if self.k_range.is_empty() {
            return bad("k_range is empty");
        }
        if self.k_range.iter().any(|&k| k < 2) {
            return bad("k_range values must be at least 2");
        }
        if self.ratio_grid.is_empty() {
            return bad("ratio_grid is empty");
        }
        if self.ratio_grid.iter().any(|&r| !(r.is_finite() && r > 0.0)) {
            return bad("ratio_grid values must be positive");
        }
        if self.kmeans_restarts == 0 {
            return bad("kmeans_restarts must be at least 1");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if !(self.tolerance.is_finite() && self.tolerance >= 0.0) {
            return bad("tolerance must be a non-negative number");
        }
        Ok(())
    }

    pub(crate) fn kmeans(&self, k: usize, seed: u64) -> KMeans {
        KMeans::new(k)
            .seed(seed)
            .restarts(self.kmeans_restarts)
            .max_iters(self.max_iters)
            .tolerance(self.tolerance)
    }
}

/// Dense symmetric matrix of pairwise cosine distances between unit vectors.
#[derive(Debug, Clone)]
pub(crate) struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub(crate) fn cosine(points: &[Vec<f64>]) -> Self {
        let n = points.len();
        let mut data = vec![0.0; n * n];
        data.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
            for (j, slot) in row.iter_mut().enumerate() {
                if i != j {
                    *slot = (1.0 - crate::model::dot(&points[i], &points[j])).clamp(0.0, 2.0);
                }
            }
        });
        Self { n, data }
    }

    pub(crate) fn len(&self) -> usize {
        self.n
    }

    pub(crate) fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub(crate) fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

pub(crate) fn unit_points(points: &[Embedding]) -> Result<Vec<Vec<f64>>, ClusterError> {
    let dim = points.first().ok_or(ClusterError::EmptyInput)?.dim();
    points
        .iter()
        .map(|p| {
            if p.dim() != dim {
                return Err(ModelError::DimensionMismatch {
                    left: dim,
                    right: p.dim(),
                }
                .into());
            }
            Ok(p.unit_f64()?)
        })
        .collect()
}

/// Renumbers labels in order of first appearance so equal partitions always
/// produce identical label vectors.
pub(crate) fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Normalized mean of unit vectors selected by `members`.
pub(crate) fn normalized_mean<'a>(vectors: impl IntoIterator<Item = &'a Vec<f64>>) -> Result<Vec<f64>, ModelError> {
    let mut sum: Vec<f64> = Vec::new();
    for v in vectors {
        if sum.is_empty() {
            sum = vec![0.0; v.len()];
        }
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    crate::model::unit_vector(&sum)
}

/// Stable 64-bit seed derivation, independent of thread scheduling.
pub(crate) fn derive_seed(seed: u64, salt: &str) -> u64 {
    // FNV-1a over the salt, then a splitmix64 finalizer.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in salt.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
