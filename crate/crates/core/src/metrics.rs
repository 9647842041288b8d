//! Internal and external cluster-quality metrics.
//!
//! * Silhouette: mean over points of `(b - a) / max(a, b)` with cosine
//!   distance, where `a` is the mean distance to the rest of the point's own
//!   cluster and `b` the smallest mean distance to another cluster. Points in
//!   singleton clusters score 0.
//! * Calinski-Harabasz: `tr(B) / tr(W) * (N - k) / (k - 1)` on unit-length
//!   points.
//! * Purity: for clusters holding at least two distinct verbs, the best
//!   overlap with any synset, summed and divided by the summed verb-set sizes.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cluster::{unit_points, ClusterError, DistanceMatrix};
use crate::model::{ClusterModel, Embedding, ModelError, PairKey, PairNode, SynsetLexicon};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("{points} points but {labels} labels")]
    LengthMismatch { points: usize, labels: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<ClusterError> for MetricError {
    fn from(e: ClusterError) -> Self {
        match e {
            ClusterError::Model(m) => MetricError::Model(m),
            other => MetricError::Undefined(other.to_string()),
        }
    }
}

/// Maps arbitrary labels onto `0..k` and returns cluster sizes.
fn dense_labels(labels: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut map = BTreeMap::new();
    for &l in labels {
        let next = map.len();
        map.entry(l).or_insert(next);
    }
    let dense: Vec<usize> = labels.iter().map(|l| map[l]).collect();
    let mut sizes = vec![0; map.len()];
    for &l in &dense {
        sizes[l] += 1;
    }
    (dense, sizes)
}

/// Cosine silhouette of a labelled point set.
pub fn silhouette(points: &[Embedding], labels: &[usize]) -> Result<f64, MetricError> {
    if points.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            points: points.len(),
            labels: labels.len(),
        });
    }
    if points.is_empty() {
        return Err(MetricError::Undefined("no points".into()));
    }
    let unit = unit_points(points)?;
    silhouette_precomputed(&DistanceMatrix::cosine(&unit), labels)
}

pub(crate) fn silhouette_precomputed(dist: &DistanceMatrix, labels: &[usize]) -> Result<f64, MetricError> {
    let n = dist.len();
    let (dense, sizes) = dense_labels(labels);
    let k = sizes.len();
    if k < 2 {
        return Err(MetricError::Undefined("silhouette needs at least two clusters".into()));
    }
    let scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = dense[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for (j, &d) in dist.row(i).iter().enumerate() {
                sums[dense[j]] += d;
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .collect();
    // Fixed-order reduction keeps the value bit-identical across thread counts.
    Ok(scores.iter().sum::<f64>() / n as f64)
}

/// Calinski-Harabasz score, or a degenerate flag when every point sits on
/// its cluster centroid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CalinskiHarabasz {
    Value(f64),
    Degenerate,
}

impl CalinskiHarabasz {
    pub fn value(self) -> Option<f64> {
        match self {
            CalinskiHarabasz::Value(v) => Some(v),
            CalinskiHarabasz::Degenerate => None,
        }
    }
}

/// Variance ratio criterion on unit-normalized points. Requires
/// `2 <= k <= N - 1`.
pub fn calinski_harabasz(points: &[Embedding], labels: &[usize]) -> Result<CalinskiHarabasz, MetricError> {
    if points.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            points: points.len(),
            labels: labels.len(),
        });
    }
    let unit = unit_points(points)?;
    let n = unit.len();
    let (dense, sizes) = dense_labels(labels);
    let k = sizes.len();
    if k < 2 || k + 1 > n {
        return Err(MetricError::Undefined(format!(
            "Calinski-Harabasz needs 2 <= k <= N - 1 (k = {k}, N = {n})"
        )));
    }
    let dim = unit[0].len();
    let mut overall = vec![0.0; dim];
    let mut centroids = vec![vec![0.0; dim]; k];
    for (p, &l) in unit.iter().zip(&dense) {
        for d in 0..dim {
            overall[d] += p[d];
            centroids[l][d] += p[d];
        }
    }
    overall.iter_mut().for_each(|v| *v /= n as f64);
    for (c, &s) in centroids.iter_mut().zip(&sizes) {
        c.iter_mut().for_each(|v| *v /= s as f64);
    }
    let between: f64 = centroids
        .iter()
        .zip(&sizes)
        .map(|(c, &s)| s as f64 * crate::model::squared_euclidean(c, &overall))
        .sum();
    let within: f64 = unit
        .iter()
        .zip(&dense)
        .map(|(p, &l)| crate::model::squared_euclidean(p, &centroids[l]))
        .sum();
    if within == 0.0 {
        return Ok(CalinskiHarabasz::Degenerate);
    }
    Ok(CalinskiHarabasz::Value(
        between / within * (n - k) as f64 / (k - 1) as f64,
    ))
}

/// Purity as an exact ratio of verb counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Purity {
    /// Sum over multi-verb clusters of the best synset overlap.
    pub matched: usize,
    /// Sum over multi-verb clusters of their verb-set sizes.
    pub total: usize,
}

impl Purity {
    pub fn value(self) -> f64 {
        self.matched as f64 / self.total as f64
    }
}

/// Synset purity over cluster verb sets. Clusters with a single distinct
/// verb are excluded from both sums.
pub fn purity<'a, I>(clusters: I, synsets: &SynsetLexicon) -> Result<Purity, MetricError>
where
    I: IntoIterator<Item = &'a BTreeSet<String>>,
{
    let mut matched = 0;
    let mut total = 0;
    for verbs in clusters {
        if verbs.len() < 2 {
            continue;
        }
        // Only synsets touching the cluster can overlap it.
        let candidates: BTreeSet<&String> = verbs.iter().filter_map(|v| synsets.synsets_of(v)).flatten().collect();
        let best = candidates
            .into_iter()
            .map(|id| synsets.synsets()[id].intersection(verbs).count())
            .max()
            .unwrap_or(0);
        matched += best;
        total += verbs.len();
    }
    if total == 0 {
        return Err(MetricError::Undefined("no cluster contains two or more verbs".into()));
    }
    Ok(Purity { matched, total })
}

/// Cluster-quality summary for a model's final clustering.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    /// `None` when fewer than two final clusters hold pairs.
    pub silhouette: Option<f64>,
    pub calinski_harabasz: Option<CalinskiHarabasz>,
    pub purity: Option<Purity>,
    pub n_points: usize,
    pub n_clusters: usize,
}

/// Scores the final clusters of `model` over the pair embeddings they cover.
/// Pairs that the model does not contain are ignored.
pub fn model_report(
    model: &ClusterModel,
    pairs: &[PairNode],
    synsets: Option<&SynsetLexicon>,
) -> Result<MetricReport, MetricError> {
    let mut lookup: BTreeMap<&PairKey, usize> = BTreeMap::new();
    for f in &model.final_clusters {
        for m in f.members() {
            lookup.insert(m, f.id);
        }
    }
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for p in pairs {
        if let Some(&l) = lookup.get(&p.key()) {
            points.push(p.embedding.clone());
            labels.push(l);
        }
    }
    let n_clusters = labels.iter().collect::<BTreeSet<_>>().len();
    let silhouette = silhouette(&points, &labels).ok();
    let calinski_harabasz = calinski_harabasz(&points, &labels).ok();
    let purity = synsets.and_then(|s| purity(model.final_clusters.iter().map(|c| c.verbs()), s).ok());
    Ok(MetricReport {
        silhouette,
        calinski_harabasz,
        purity,
        n_points: points.len(),
        n_clusters,
    })
}
