use std::collections::{BTreeMap, HashSet};

use log::{debug, info};
use rayon::prelude::*;

use super::select::select_k_unit;
use super::{derive_seed, normalized_mean, Algorithm, ClusterError, ClusteringConfig, Dendrogram, DistanceMatrix};
use crate::metrics::silhouette_precomputed;
use crate::model::{ClusterModel, Embedding, ModelError, PairKey, PairNode, SenseCluster};

/// A verb, its `(members, centroid)` groups and its silhouette.
type VerbClusters = (String, Vec<(Vec<PairKey>, Vec<f64>)>, f64);

/// Same-verb clusters for every verb present, plus each verb's silhouette.
#[derive(Debug, Clone, PartialEq)]
pub struct Step1Result {
    pub clusters: BTreeMap<String, Vec<SenseCluster>>,
    pub silhouettes: BTreeMap<String, f64>,
}

/// Cross-verb clustering of the Step-1 centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct Step2Result {
    pub final_clusters: Vec<SenseCluster>,
    /// Final cluster id for every Step-1 cluster id.
    pub step1_to_final: Vec<usize>,
    pub chosen_ratio: f64,
    pub k: usize,
    pub silhouette: f64,
    /// `(ratio, k_r, silhouette)` for every ratio that was feasible.
    pub evaluated: Vec<(f64, usize, f64)>,
}

/// Number of final clusters for ratio `r`: `trunc(lexicon_size * r)`.
pub fn ratio_cluster_count(lexicon_size: usize, ratio: f64) -> usize {
    (lexicon_size as f64 * ratio).trunc() as usize
}

/// Step 1: clusters each verb's pair embeddings on their own.
///
/// Verbs with three or more pairs go through silhouette selection; verbs with
/// one or two pairs form a single cluster (silhouette recorded as 0). Pairs
/// are ordered by image id inside each verb, so the result does not depend
/// on input order. Step-1 ids are assigned in verb order, then label order.
pub fn step1_same_verb(pairs: &[PairNode], config: &ClusteringConfig) -> Result<Step1Result, ClusterError> {
    config.validate()?;
    let mut by_verb: BTreeMap<&str, Vec<&PairNode>> = BTreeMap::new();
    let mut seen = HashSet::new();
    let dim = pairs.first().map(|p| p.embedding.dim());
    for p in pairs {
        if !seen.insert((p.image_id.as_str(), p.verb.as_str())) {
            return Err(ClusterError::DuplicatePair {
                image: p.image_id.clone(),
                verb: p.verb.clone(),
            });
        }
        if Some(p.embedding.dim()) != dim {
            return Err(ModelError::DimensionMismatch {
                left: dim.unwrap_or(0),
                right: p.embedding.dim(),
            }
            .into());
        }
        by_verb.entry(p.verb.as_str()).or_default().push(p);
    }

    let per_verb: Vec<VerbClusters> = by_verb
        .into_par_iter()
        .map(|(verb, mut nodes)| {
            nodes.sort_by(|a, b| a.image_id.cmp(&b.image_id));
            let unit: Vec<Vec<f64>> = nodes.iter().map(|n| n.embedding.unit_f64()).collect::<Result<_, _>>()?;
            let selection = select_k_unit(&unit, config, derive_seed(config.seed, verb))?;
            debug!("verb {verb}: {} pairs -> k = {}", nodes.len(), selection.k);
            let mut groups: Vec<(Vec<PairKey>, Vec<&Vec<f64>>)> = vec![(Vec::new(), Vec::new()); selection.k];
            for ((node, vec), &label) in nodes.iter().zip(&unit).zip(&selection.labels) {
                groups[label].0.push(node.key());
                groups[label].1.push(vec);
            }
            let clusters = groups
                .into_iter()
                .map(|(keys, vecs)| Ok((keys, normalized_mean(vecs)?)))
                .collect::<Result<Vec<_>, ModelError>>()?;
            Ok((verb.to_string(), clusters, selection.silhouette))
        })
        .collect::<Result<_, ClusterError>>()?;

    let mut next_id = 0;
    let mut clusters = BTreeMap::new();
    let mut silhouettes = BTreeMap::new();
    for (verb, groups, silhouette) in per_verb {
        let list = groups
            .into_iter()
            .map(|(keys, centroid)| {
                let c = SenseCluster::new(next_id, keys, Embedding::from_f64(&centroid)?);
                next_id += 1;
                Ok(c)
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        clusters.insert(verb.clone(), list);
        silhouettes.insert(verb, silhouette);
    }
    Ok(Step1Result { clusters, silhouettes })
}

fn step1_centroids(step1: &BTreeMap<String, Vec<SenseCluster>>) -> Result<Vec<Vec<f64>>, ClusterError> {
    let centroids: Vec<Vec<f64>> = step1
        .values()
        .flatten()
        .map(|c| c.centroid().unit_f64())
        .collect::<Result<_, _>>()?;
    if centroids.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    Ok(centroids)
}

fn cluster_centroids(
    centroids: &[Vec<f64>],
    dendrogram: Option<&Dendrogram>,
    k: usize,
    config: &ClusteringConfig,
) -> Result<Vec<usize>, ClusterError> {
    match config.algorithm {
        Algorithm::Hac => match dendrogram {
            Some(d) => d.cut(k),
            None => Dendrogram::from_distances(&DistanceMatrix::cosine(centroids)).cut(k),
        },
        Algorithm::Kmeans => Ok(config
            .kmeans(k, derive_seed(config.seed, "\u{0}step2"))
            .fit_unit(centroids)?
            .labels),
    }
}

/// Step 2: clusters the Step-1 centroids across verbs, trying
/// `k_r = trunc(lexicon_size * r)` for every ratio in the grid.
///
/// Ratios whose `k_r` is below 2 or not below the number of Step-1 clusters
/// are skipped. The highest cosine silhouette wins, smallest `k_r` on ties.
pub fn step2_cross_verb(
    step1: &BTreeMap<String, Vec<SenseCluster>>,
    lexicon_size: usize,
    config: &ClusteringConfig,
) -> Result<Step2Result, ClusterError> {
    config.validate()?;
    let centroids = step1_centroids(step1)?;
    let m = centroids.len();
    let dist = DistanceMatrix::cosine(&centroids);
    let dendrogram = (config.algorithm == Algorithm::Hac).then(|| Dendrogram::from_distances(&dist));

    let mut ratios: Vec<(usize, f64)> = config
        .ratio_grid
        .iter()
        .map(|&r| (ratio_cluster_count(lexicon_size, r), r))
        .filter(|&(k, _)| k >= 2 && k < m)
        .collect();
    ratios.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    if ratios.is_empty() {
        return Err(ClusterError::NoFeasibleRatio {
            step1_clusters: m,
            lexicon_size,
        });
    }

    let mut evaluated = Vec::new();
    let mut best: Option<(f64, usize, f64, Vec<usize>)> = None;
    let mut last_k = None;
    for (k, r) in ratios {
        // Equal k_r from different ratios yields an identical clustering.
        if last_k == Some(k) {
            continue;
        }
        last_k = Some(k);
        let labels = cluster_centroids(&centroids, dendrogram.as_ref(), k, config)?;
        let score = silhouette_precomputed(&dist, &labels).expect("k >= 2");
        debug!("step 2: r = {r}, k_r = {k}, silhouette = {score:.6}");
        evaluated.push((r, k, score));
        if best.as_ref().is_none_or(|b| score > b.2) {
            best = Some((r, k, score, labels));
        }
    }
    let (chosen_ratio, k, silhouette, labels) = best.expect("at least one feasible ratio");
    info!("step 2: chose r = {chosen_ratio} (k = {k}), silhouette {silhouette:.4}");
    let final_clusters = assemble_final(step1, &centroids, &labels, k)?;
    Ok(Step2Result {
        final_clusters,
        step1_to_final: labels,
        chosen_ratio,
        k,
        silhouette,
        evaluated,
    })
}

fn assemble_final(
    step1: &BTreeMap<String, Vec<SenseCluster>>,
    centroids: &[Vec<f64>],
    labels: &[usize],
    k: usize,
) -> Result<Vec<SenseCluster>, ClusterError> {
    let mut members: Vec<Vec<PairKey>> = vec![Vec::new(); k];
    let mut parts: Vec<Vec<&Vec<f64>>> = vec![Vec::new(); k];
    for (c, &label) in step1.values().flatten().zip(labels) {
        members[label].extend(c.members().iter().cloned());
        parts[label].push(&centroids[c.id]);
    }
    members
        .into_iter()
        .zip(parts)
        .enumerate()
        .map(|(id, (keys, vecs))| {
            let centroid = Embedding::from_f64(&normalized_mean(vecs)?)?;
            Ok(SenseCluster::new(id, keys, centroid))
        })
        .collect()
}

/// Runs both steps and checks the partition invariants of the result.
pub fn run_two_step(
    pairs: &[PairNode],
    lexicon_size: usize,
    config: &ClusteringConfig,
) -> Result<ClusterModel, ClusterError> {
    if pairs.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    let step1 = step1_same_verb(pairs, config)?;
    info!(
        "step 1: {} verbs -> {} clusters",
        step1.clusters.len(),
        step1.clusters.values().map(Vec::len).sum::<usize>()
    );
    let step2 = step2_cross_verb(&step1.clusters, lexicon_size, config)?;
    let model = ClusterModel {
        config: config.clone(),
        lexicon_size,
        step1: step1.clusters,
        step1_silhouettes: step1.silhouettes,
        step1_to_final: step2.step1_to_final,
        final_clusters: step2.final_clusters,
        final_silhouette: step2.silhouette,
        chosen_ratio: step2.chosen_ratio,
    };
    model.validate()?;
    Ok(model)
}

/// Re-clusters a model's Step-1 centroids into `k` groups with the model's
/// own algorithm and seed. Returns the new final label of every Step-1 id.
pub fn recluster_step1(model: &ClusterModel, k: usize) -> Result<Vec<usize>, ClusterError> {
    let centroids = step1_centroids(&model.step1)?;
    if k == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    if k > centroids.len() {
        return Err(ClusterError::TooManyClusters { k, n: centroids.len() });
    }
    cluster_centroids(&centroids, None, k, &model.config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PairSource;

    fn pair(image: &str, verb: &str, deg: f64) -> PairNode {
        let r = deg.to_radians();
        PairNode::new(
            image,
            verb,
            Embedding::from_f64(&[r.cos(), r.sin(), 0.0]).unwrap(),
            PairSource::LlmReply,
        )
    }

    #[test]
    fn ratio_counts_truncate() {
        assert_eq!(ratio_cluster_count(504, 1.3), 655);
        assert_eq!(ratio_cluster_count(504, 1.1), 554);
        assert_eq!(ratio_cluster_count(504, 0.6), 302);
    }

    #[test]
    fn tiny_verbs_form_one_cluster_and_ids_are_global() {
        let pairs = vec![
            pair("i1", "running", 0.0),
            pair("i2", "running", 80.0),
            pair("i1", "eating", 0.0),
        ];
        let s1 = step1_same_verb(&pairs, &ClusteringConfig::default()).unwrap();
        assert_eq!(s1.clusters.len(), 2);
        assert_eq!(s1.clusters["running"].len(), 1);
        assert_eq!(s1.clusters["running"][0].len(), 2);
        assert_eq!(s1.clusters["eating"][0].id, 0);
        assert_eq!(s1.clusters["running"][0].id, 1);
        assert_eq!(s1.silhouettes["running"], 0.0);
        assert!(!s1.clusters.contains_key("walking"));
    }

    #[test]
    fn planted_split_within_a_verb() {
        let mut pairs: Vec<PairNode> = (0..6).map(|i| pair(&format!("a{i}"), "drawing", i as f64)).collect();
        pairs.extend((0..6).map(|i| pair(&format!("b{i}"), "drawing", 120.0 + i as f64)));
        let s1 = step1_same_verb(&pairs, &ClusteringConfig::default()).unwrap();
        let clusters = &s1.clusters["drawing"];
        assert_eq!(clusters.len(), 2);
        for c in clusters {
            let first = &c.members()[0].image[..1];
            assert!(c.members().iter().all(|m| &m.image[..1] == first));
            assert!((c.centroid().norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn duplicate_pairs_are_rejected() {
        let pairs = vec![pair("i1", "running", 0.0), pair("i1", "running", 3.0)];
        assert!(matches!(
            step1_same_verb(&pairs, &ClusteringConfig::default()),
            Err(ClusterError::DuplicatePair { .. })
        ));
    }

    #[test]
    fn infeasible_ratios_are_skipped() {
        let pairs: Vec<PairNode> = (0..100)
            .map(|i| pair("img", &format!("verb{i:03}"), i as f64 * 3.0))
            .collect();
        let s1 = step1_same_verb(&pairs, &ClusteringConfig::default()).unwrap();
        assert_eq!(s1.clusters.values().flatten().count(), 100);
        // With 504 verbs every default ratio gives k_r >= 302 > 100.
        assert_eq!(
            step2_cross_verb(&s1.clusters, 504, &ClusteringConfig::default()),
            Err(ClusterError::NoFeasibleRatio {
                step1_clusters: 100,
                lexicon_size: 504
            })
        );
        let s2 = step2_cross_verb(&s1.clusters, 80, &ClusteringConfig::default()).unwrap();
        // 80 * 1.3 = 104 and above are infeasible.
        assert!(s2.evaluated.iter().all(|&(_, k, _)| k < 100));
        assert_eq!(s2.evaluated.len(), 7);
    }

    #[test]
    fn two_step_model_is_a_valid_partition() {
        let mut pairs = Vec::new();
        for (v, base) in [
            ("teaching", 0.0),
            ("lecturing", 2.0),
            ("drawing", 100.0),
            ("painting", 103.0),
        ] {
            for i in 0..5 {
                pairs.push(pair(&format!("{v}{i}"), v, base + i as f64 * 0.5));
            }
        }
        for algorithm in [Algorithm::Kmeans, Algorithm::Hac] {
            let config = ClusteringConfig {
                algorithm,
                ratio_grid: vec![0.5, 0.75],
                ..Default::default()
            };
            let model = run_two_step(&pairs, 4, &config).unwrap();
            model.validate().unwrap();
            assert_eq!(model.final_clusters.len(), 2, "{algorithm}");
            let teach = model.final_cluster_of(&PairKey::new("teaching0", "teaching")).unwrap();
            let lect = model
                .final_cluster_of(&PairKey::new("lecturing3", "lecturing"))
                .unwrap();
            let draw = model.final_cluster_of(&PairKey::new("drawing1", "drawing")).unwrap();
            assert_eq!(teach, lect);
            assert_ne!(teach, draw);
            let relabel = recluster_step1(&model, 2).unwrap();
            assert_eq!(relabel, model.step1_to_final);
        }
    }
}
