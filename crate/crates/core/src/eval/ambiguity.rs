use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::model::ClusterModel;

/// Ambiguity summary of a model's final clusters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmbiguityStats {
    pub n_clusters: usize,
    /// Mean verb-set size over final clusters (synonymy).
    pub verbs_per_cluster: f64,
    /// Mean number of final clusters holding each image (multi-perspective).
    pub clusters_per_image: f64,
    /// Fraction of images found in more than one final cluster.
    pub multi_image_rate: f64,
    /// Mean number of final clusters holding each verb (polysemy).
    pub clusters_per_verb: f64,
    /// Fraction of verbs found in more than one final cluster.
    pub multi_verb_rate: f64,
    pub n_images: usize,
    pub n_verbs: usize,
}

pub fn ambiguity_stats(model: &ClusterModel) -> AmbiguityStats {
    let mut per_image: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    let mut per_verb: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    let mut verb_total = 0usize;
    for c in &model.final_clusters {
        verb_total += c.verbs().len();
        for m in c.members() {
            per_image.entry(&m.image).or_default().insert(c.id);
            per_verb.entry(&m.verb).or_default().insert(c.id);
        }
    }
    let mean =
        |m: &BTreeMap<&str, BTreeSet<usize>>| m.values().map(BTreeSet::len).sum::<usize>() as f64 / m.len() as f64;
    let rate = |m: &BTreeMap<&str, BTreeSet<usize>>| m.values().filter(|s| s.len() > 1).count() as f64 / m.len() as f64;
    AmbiguityStats {
        n_clusters: model.final_clusters.len(),
        verbs_per_cluster: verb_total as f64 / model.final_clusters.len() as f64,
        clusters_per_image: mean(&per_image),
        multi_image_rate: rate(&per_image),
        clusters_per_verb: mean(&per_verb),
        multi_verb_rate: rate(&per_verb),
        n_images: per_image.len(),
        n_verbs: per_verb.len(),
    }
}
