use super::{unit_points, Algorithm, ClusterError, ClusteringConfig, Dendrogram, DistanceMatrix};
use crate::metrics::silhouette_precomputed;
use crate::model::Embedding;

/// Outcome of silhouette-driven model selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub k: usize,
    pub labels: Vec<usize>,
    pub silhouette: f64,
    /// Every `(k, silhouette)` that was evaluated, in ascending `k`.
    pub evaluated: Vec<(usize, f64)>,
}

impl Selection {
    fn single(n: usize) -> Self {
        Self {
            k: 1,
            labels: vec![0; n],
            silhouette: 0.0,
            evaluated: Vec::new(),
        }
    }
}

/// Clusters `points` once per candidate `k` and keeps the result with the
/// highest cosine silhouette; the smallest `k` wins ties.
///
/// Candidates are the configured `k_range` clamped into `[2, n - 1]`. Inputs
/// with fewer than three points, or whose points all coincide, come back as
/// a single cluster with silhouette 0.
pub fn select_k(points: &[Embedding], config: &ClusteringConfig) -> Result<Selection, ClusterError> {
    config.validate()?;
    let unit = unit_points(points)?;
    select_k_unit(&unit, config, config.seed)
}

pub(crate) fn select_k_unit(
    points: &[Vec<f64>],
    config: &ClusteringConfig,
    seed: u64,
) -> Result<Selection, ClusterError> {
    let n = points.len();
    if n == 0 {
        return Err(ClusterError::EmptyInput);
    }
    if n < 3 {
        return Ok(Selection::single(n));
    }
    let dist = DistanceMatrix::cosine(points);
    if dist.max() <= 1e-12 {
        return Ok(Selection::single(n));
    }
    let candidates = clamp_candidates(&config.k_range, n);
    let dendrogram = match config.algorithm {
        Algorithm::Hac => Some(Dendrogram::from_distances(&dist)),
        Algorithm::Kmeans => None,
    };
    let mut best: Option<Selection> = None;
    let mut evaluated = Vec::with_capacity(candidates.len());
    for k in candidates {
        let labels = match &dendrogram {
            Some(d) => d.cut(k)?,
            None => config.kmeans(k, seed).fit_unit(points)?.labels,
        };
        let score =
            silhouette_precomputed(&dist, &labels).expect("2 <= k <= n - 1 always yields at least two clusters");
        evaluated.push((k, score));
        if best.as_ref().is_none_or(|b| score > b.silhouette) {
            best = Some(Selection {
                k,
                labels,
                silhouette: score,
                evaluated: Vec::new(),
            });
        }
    }
    let mut best = best.expect("at least one candidate");
    best.evaluated = evaluated;
    Ok(best)
}

pub(crate) fn clamp_candidates(k_range: &[usize], n: usize) -> Vec<usize> {
    let hi = n.saturating_sub(1).max(2);
    let mut ks: Vec<usize> = k_range.iter().map(|&k| k.clamp(2, hi)).collect();
    ks.sort_unstable();
    ks.dedup();
    ks
}
