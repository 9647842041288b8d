use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;

use super::{check_k_values, EvalError, Fraction};
use crate::model::{normalize_verb, ClusterModel, PairKey, PredictionRecord, SynsetLexicon};

/// Image id to the ids of every final cluster holding one of its pairs.
pub fn image_cluster_index(model: &ClusterModel) -> BTreeMap<String, BTreeSet<usize>> {
    let mut out: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for c in &model.final_clusters {
        for image in c.images() {
            out.entry(image.clone()).or_default().insert(c.id);
        }
    }
    out
}

/// Verb union of the final clusters containing each image, for an arbitrary
/// assignment of Step-1 clusters to final groups.
pub(crate) fn image_verb_unions(model: &ClusterModel, assignment: &[usize]) -> BTreeMap<String, BTreeSet<String>> {
    let mut group_verbs: BTreeMap<usize, BTreeSet<&str>> = BTreeMap::new();
    let mut group_images: BTreeMap<usize, BTreeSet<&str>> = BTreeMap::new();
    for c in model.step1_clusters() {
        let g = assignment[c.id];
        group_verbs
            .entry(g)
            .or_default()
            .extend(c.verbs().iter().map(String::as_str));
        group_images
            .entry(g)
            .or_default()
            .extend(c.images().iter().map(String::as_str));
    }
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (g, images) in group_images {
        let verbs = &group_verbs[&g];
        for image in images {
            out.entry(image.to_string())
                .or_default()
                .extend(verbs.iter().map(|v| v.to_string()));
        }
    }
    out
}

/// Records whose image the model covers, and the number left out.
pub(crate) fn covered<'a, T>(
    records: &'a [PredictionRecord],
    index: &BTreeMap<String, T>,
) -> Result<(Vec<&'a PredictionRecord>, usize), EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    let kept: Vec<_> = records.iter().filter(|r| index.contains_key(&r.image_id)).collect();
    let skipped = records.len() - kept.len();
    if skipped > 0 {
        log::warn!("{skipped} prediction records name images absent from the cluster model; skipped");
    }
    if kept.is_empty() {
        return Err(EvalError::NoCoveredRecords { skipped });
    }
    Ok((kept, skipped))
}

/// Correct counts under the three criteria for one cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CriterionCounts {
    pub gold: Fraction,
    pub synset: Fraction,
    pub cluster: Fraction,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    /// Records scored (the common denominator).
    pub n_records: usize,
    /// Records left out because their image is absent from the model.
    pub skipped: usize,
    pub by_k: BTreeMap<usize, CriterionCounts>,
}

impl EvalResult {
    pub fn at(&self, k: usize) -> Option<&CriterionCounts> {
        self.by_k.get(&k)
    }
}

#[derive(Default, Clone, Copy)]
struct Hits {
    gold: u64,
    synset: u64,
    cluster: u64,
}

/// Scores each record's first `k` verbs for every `k` in `k_values`:
/// gold-correct on an exact match, synset-correct when a verb shares a
/// synset with gold, cluster-correct when a verb is gold or lies in the
/// verb union of the image's final clusters.
pub fn score(
    records: &[PredictionRecord],
    model: &ClusterModel,
    synsets: &SynsetLexicon,
    k_values: &[usize],
) -> Result<EvalResult, EvalError> {
    check_k_values(k_values)?;
    let unions = image_verb_unions(model, &model.step1_to_final);
    let (kept, skipped) = covered(records, &unions)?;
    let ks: BTreeSet<usize> = k_values.iter().copied().collect();
    let per_record: Vec<Vec<Hits>> = kept
        .par_iter()
        .map(|r| {
            let verbs = &unions[&r.image_id];
            ks.iter()
                .map(|&k| {
                    let top = r.top(k);
                    let gold = top.contains(&r.gold_verb);
                    Hits {
                        gold: gold as u64,
                        synset: top.iter().any(|v| synsets.shares_synset(v, &r.gold_verb)) as u64,
                        cluster: (gold || top.iter().any(|v| verbs.contains(v))) as u64,
                    }
                })
                .collect()
        })
        .collect();
    let den = kept.len() as u64;
    let by_k = ks
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let mut t = Hits::default();
            for h in &per_record {
                t.gold += h[i].gold;
                t.synset += h[i].synset;
                t.cluster += h[i].cluster;
            }
            let counts = CriterionCounts {
                gold: Fraction::new(t.gold, den),
                synset: Fraction::new(t.synset, den),
                cluster: Fraction::new(t.cluster, den),
            };
            (k, counts)
        })
        .collect();
    Ok(EvalResult {
        n_records: kept.len(),
        skipped,
        by_k,
    })
}

/// Top-1 decomposition of the cluster-criterion gain over exact match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BreakdownResult {
    pub gold_acc: Fraction,
    pub cluster_acc: Fraction,
    /// Gains from predictions in the gold node's own final cluster.
    pub syn_gain: Fraction,
    /// Gains from predictions found only in other clusters of the image.
    pub multi_p_gain: Fraction,
    pub n_records: usize,
    pub skipped: usize,
}

impl BreakdownResult {
    /// `cluster_acc - gold_acc == syn_gain + multi_p_gain` over the shared
    /// denominator.
    pub fn identity_holds(&self) -> bool {
        let den = self.gold_acc.den;
        [self.cluster_acc, self.syn_gain, self.multi_p_gain]
            .iter()
            .all(|f| f.den == den)
            && self.cluster_acc.num >= self.gold_acc.num
            && self.cluster_acc.num - self.gold_acc.num == self.syn_gain.num + self.multi_p_gain.num
    }
}

pub fn breakdown(records: &[PredictionRecord], model: &ClusterModel) -> Result<BreakdownResult, EvalError> {
    let unions = image_verb_unions(model, &model.step1_to_final);
    let (kept, skipped) = covered(records, &unions)?;
    let (mut gold, mut cluster, mut syn, mut multi) = (0u64, 0u64, 0u64, 0u64);
    for r in kept.iter() {
        let top1 = &r.ranked_verbs()[0];
        let key = PairKey::new(r.image_id.clone(), normalize_verb(&r.gold_verb));
        let gold_cluster = model.final_cluster_of(&key).ok_or_else(|| EvalError::MissingGoldNode {
            image: key.image.clone(),
            verb: key.verb.clone(),
        })?;
        if *top1 == r.gold_verb {
            gold += 1;
            cluster += 1;
        } else if unions[&r.image_id].contains(top1) {
            cluster += 1;
            if model.final_clusters[gold_cluster].verbs().contains(top1) {
                syn += 1;
            } else {
                multi += 1;
            }
        }
    }
    let den = kept.len() as u64;
    Ok(BreakdownResult {
        gold_acc: Fraction::new(gold, den),
        cluster_acc: Fraction::new(cluster, den),
        syn_gain: Fraction::new(syn, den),
        multi_p_gain: Fraction::new(multi, den),
        n_records: kept.len(),
        skipped,
    })
}
