use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::score::{covered, image_verb_unions};
use super::{EvalError, Fraction};
use crate::cluster::recluster_step1;
use crate::model::{ClusterModel, PredictionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub k: usize,
    pub top1_cluster: Fraction,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// Top-1 accuracy against the unclustered reference verbs of each image.
    pub baseline: Fraction,
    /// Requested counts outside `1..step1_count`, left out.
    pub skipped_ks: Vec<usize>,
    pub n_records: usize,
    pub skipped_records: usize,
}

/// Re-clusters the Step-1 centroids at each `k` and recomputes top-1
/// cluster accuracy over the records whose image the model covers.
pub fn robustness_sweep(
    model: &ClusterModel,
    k_list: &[usize],
    records: &[PredictionRecord],
    raw_references: &BTreeMap<String, BTreeSet<String>>,
) -> Result<SweepResult, EvalError> {
    let own = image_verb_unions(model, &model.step1_to_final);
    let (kept, skipped_records) = covered(records, &own)?;
    let den = kept.len() as u64;
    let m = model.step1_count();
    let baseline = kept
        .iter()
        .filter(|r| {
            raw_references
                .get(&r.image_id)
                .is_some_and(|refs| refs.contains(&r.ranked_verbs()[0]))
        })
        .count() as u64;

    let mut points = Vec::new();
    let mut skipped_ks = Vec::new();
    let mut seen = BTreeSet::new();
    for &k in k_list {
        if !seen.insert(k) {
            continue;
        }
        if k == 0 || k >= m {
            log::warn!("sweep: k = {k} is outside 1..{m} (Step-1 cluster count); skipped");
            skipped_ks.push(k);
            continue;
        }
        let assignment = recluster_step1(model, k)?;
        let unions = image_verb_unions(model, &assignment);
        let hits = kept
            .iter()
            .filter(|r| {
                let top1 = &r.ranked_verbs()[0];
                *top1 == r.gold_verb || unions[&r.image_id].contains(top1)
            })
            .count() as u64;
        points.push(SweepPoint {
            k,
            top1_cluster: Fraction::new(hits, den),
        });
    }
    Ok(SweepResult {
        points,
        baseline: Fraction::new(baseline, den),
        skipped_ks,
        n_records: kept.len(),
        skipped_records,
    })
}
