//! Verb sense clustering and ambiguity-aware evaluation for visual activity
//! recognition.
//!
//! The crate groups `<image, verb>` pair embeddings into *sense clusters* with
//! a two-step procedure (same-verb clustering, then cross-verb clustering of
//! the resulting centroids), choosing the number of clusters at each step by
//! the cosine silhouette. The clusters are then used to score activity
//! recognition predictions under three criteria: exact match against the
//! gold verb, shared synset, and membership in any cluster that contains the
//! image.
//!
//! Module map:
//!
//! * [`model`] holds the shared domain types and vector primitives.
//! * [`io`] reads and writes every on-disk artifact.
//! * [`cluster`] implements K-Means, complete-linkage HAC, silhouette model
//!   selection and the two-step pipeline.
//! * [`metrics`] computes silhouette, Calinski-Harabasz and synset purity.
//! * [`eval`] scores predictions, decomposes accuracy gains, reports
//!   ambiguity statistics, runs the granularity sweep and the similarity
//!   ranking probe.
//! * [`acquire`] turns multimodal model replies into pair nodes and talks to
//!   a chat-completion endpoint through an on-disk reply cache.
//!
//! A narrative guide lives in the `book/` directory of the repository; its
//! code listings are compiled as doctests of this crate.

pub mod acquire;
pub mod cluster;
pub mod eval;
pub mod io;
pub mod metrics;
pub mod model;

pub use cluster::{Algorithm, ClusteringConfig};
pub use model::{
    cosine_distance, normalize, ClusterModel, Embedding, ModelError, PairKey, PairNode, PairSource, PredictionRecord,
    SenseCluster, SynsetLexicon, VerbLexicon,
};

/// Version string embedded in every artifact this crate writes.
pub const TOOLKIT_VERSION: &str = concat!("verbsense ", env!("CARGO_PKG_VERSION"));

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/vectors.md")]
    mod vectors {}
    #[doc = include_str!("../../../book/src/two_step_clustering.md")]
    mod two_step_clustering {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/acquisition.md")]
    mod acquisition {}
    #[doc = include_str!("../../../book/src/file_formats.md")]
    mod file_formats {}
}
