use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{check_k_values, EvalError, Fraction};
use crate::io::SimilarityMatrix;
use crate::model::VerbLexicon;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub n_images: usize,
    pub top_k: BTreeMap<usize, Fraction>,
}

/// Ranks verbs per image by descending score and reports top-k accuracy
/// against the gold labels. Equal scores fall back to lexicon order, or to
/// column order without a lexicon. With a lexicon, columns outside it are
/// ignored and every lexicon verb must have a column.
pub fn rank_by_similarity(
    matrix: &SimilarityMatrix,
    gold: &BTreeMap<String, String>,
    lexicon: Option<&VerbLexicon>,
    k_values: &[usize],
) -> Result<ProbeResult, EvalError> {
    check_k_values(k_values)?;
    if matrix.rows.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    let column: BTreeMap<&str, usize> = matrix.verbs.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
    // (column index, tie-break rank) for every ranked verb.
    let ranked: Vec<(usize, usize)> = match lexicon {
        Some(lex) => lex
            .verbs()
            .iter()
            .enumerate()
            .map(|(rank, v)| {
                column
                    .get(v.as_str())
                    .map(|&c| (c, rank))
                    .ok_or_else(|| EvalError::MissingColumn(v.clone()))
            })
            .collect::<Result<_, _>>()?,
        None => (0..matrix.verbs.len()).map(|c| (c, c)).collect(),
    };
    let ks: BTreeSet<usize> = k_values.iter().copied().collect();
    let mut hits: BTreeMap<usize, u64> = ks.iter().map(|&k| (k, 0)).collect();
    let mut order = ranked.clone();
    for (image, scores) in &matrix.rows {
        let g = gold.get(image).ok_or_else(|| EvalError::MissingGold(image.clone()))?;
        let &gold_col = column
            .get(g.as_str())
            .ok_or_else(|| EvalError::MissingColumn(g.clone()))?;
        order.sort_by(|a, b| scores[b.0].total_cmp(&scores[a.0]).then(a.1.cmp(&b.1)));
        let Some(pos) = order.iter().position(|&(c, _)| c == gold_col) else {
            return Err(EvalError::MissingColumn(g.clone()));
        };
        for (&k, h) in hits.iter_mut() {
            if pos < k {
                *h += 1;
            }
        }
    }
    let n = matrix.rows.len() as u64;
    Ok(ProbeResult {
        n_images: matrix.rows.len(),
        top_k: hits.into_iter().map(|(k, h)| (k, Fraction::new(h, n))).collect(),
    })
}
