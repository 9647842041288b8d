//! Scoring of activity-recognition predictions against a cluster model.
//!
//! Every accuracy is kept as an exact [`Fraction`] of counts, so identities
//! such as `cluster - gold = syn_gain + multi_p_gain` hold exactly and are
//! checked on integers, not floats.

mod ambiguity;
mod probe;
mod report;
mod score;
mod sweep;

use std::fmt;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::cluster::ClusterError;

pub use ambiguity::{ambiguity_stats, AmbiguityStats};
pub use probe::{rank_by_similarity, ProbeResult};
pub use report::{ambiguity_tsv, breakdown_tsv, eval_tsv, probe_tsv, sweep_tsv};
pub use score::{breakdown, image_cluster_index, score, BreakdownResult, CriterionCounts, EvalResult};
pub use sweep::{robustness_sweep, SweepPoint, SweepResult};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no prediction records to evaluate")]
    EmptyRecords,
    #[error("none of the {skipped} prediction records has an image in the cluster model")]
    NoCoveredRecords { skipped: usize },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("gold node ({image}, {verb}) is not part of the cluster model")]
    MissingGoldNode { image: String, verb: String },
    #[error("image {0:?} has no gold label")]
    MissingGold(String),
    #[error("verb {0:?} has no column in the similarity matrix")]
    MissingColumn(String),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

/// A non-negative rational `num / den` with `den > 0`, kept unreduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Self {
        assert!(den > 0, "fraction with zero denominator");
        Self { num, den }
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Exact comparison by cross multiplication.
    pub fn cmp_exact(self, other: Fraction) -> std::cmp::Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

impl PartialOrd for Fraction {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp_exact(*other))
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Fraction", 3)?;
        st.serialize_field("num", &self.num)?;
        st.serialize_field("den", &self.den)?;
        st.serialize_field("value", &self.value())?;
        st.end()
    }
}

fn check_k_values(k_values: &[usize]) -> Result<(), EvalError> {
    if k_values.contains(&0) {
        return Err(EvalError::InvalidK);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fraction_order_is_exact() {
        assert!(Fraction::new(1, 3) < Fraction::new(34, 100));
        assert_eq!(
            Fraction::new(2, 4).cmp_exact(Fraction::new(1, 2)),
            std::cmp::Ordering::Equal
        );
        assert_eq!(Fraction::new(2, 3).to_string(), "2/3");
    }

    #[test]
    fn fraction_serializes_counts_and_value() {
        let v = serde_json::to_value(Fraction::new(1, 4)).unwrap();
        assert_eq!(v, serde_json::json!({"num": 1, "den": 4, "value": 0.25}));
    }
}
