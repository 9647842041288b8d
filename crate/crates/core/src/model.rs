//! Domain types shared across the toolkit and the two vector primitives every
//! other module builds on.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cluster::{Algorithm, ClusteringConfig};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("degenerate vector: norm is zero")]
    DegenerateVector,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("embedding must have at least one component")]
    EmptyEmbedding,
    #[error("embedding component {index} is not finite")]
    NonFinite { index: usize },
    #[error("invalid verb {0:?}: verbs must be non-empty")]
    EmptyVerb(String),
    #[error("duplicate verb {0:?} in lexicon")]
    DuplicateVerb(String),
    #[error("synset {0:?} has no verbs")]
    EmptySynset(String),
    #[error("prediction for image {0:?} has an empty ranking")]
    EmptyRanking(String),
    #[error("corrupt cluster model: {0}")]
    CorruptModel(String),
}

/// Canonical form used for every verb comparison: trimmed and lowercased.
pub fn normalize_verb(raw: &str) -> String {
    raw.trim().to_lowercase()
}

/// The closed list of target verbs, in a stable order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerbLexicon {
    verbs: Vec<String>,
    index: HashMap<String, usize>,
}

impl VerbLexicon {
    pub fn new<I, S>(verbs: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out = Vec::new();
        let mut index = HashMap::new();
        for raw in verbs {
            let verb = normalize_verb(raw.as_ref());
            if verb.is_empty() {
                return Err(ModelError::EmptyVerb(raw.as_ref().to_string()));
            }
            if index.insert(verb.clone(), out.len()).is_some() {
                return Err(ModelError::DuplicateVerb(verb));
            }
            out.push(verb);
        }
        Ok(Self { verbs: out, index })
    }

    pub fn len(&self) -> usize {
        self.verbs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verbs.is_empty()
    }

    pub fn verbs(&self) -> &[String] {
        &self.verbs
    }

    /// Id of a verb, matched case-insensitively after trimming.
    pub fn id(&self, verb: &str) -> Option<usize> {
        self.index.get(&normalize_verb(verb)).copied()
    }

    pub fn contains(&self, verb: &str) -> bool {
        self.id(verb).is_some()
    }

    /// Hex SHA-256 of the newline-joined verb list. Recorded in corpus
    /// manifests so a corpus cannot silently be read against another lexicon.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for verb in &self.verbs {
            hasher.update(verb.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

/// A dense embedding stored as 32-bit reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct Embedding(Vec<f32>);

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Self, ModelError> {
        if values.is_empty() {
            return Err(ModelError::EmptyEmbedding);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite { index });
        }
        Ok(Self(values))
    }

    /// Builds an embedding from 64-bit values, rounding each to `f32`.
    pub fn from_f64(values: &[f64]) -> Result<Self, ModelError> {
        Self::new(values.iter().map(|&v| v as f32).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt()
    }

    /// Unit-length copy in 64-bit precision.
    pub fn unit_f64(&self) -> Result<Vec<f64>, ModelError> {
        unit_vector(&self.to_f64())
    }
}

impl TryFrom<Vec<f32>> for Embedding {
    type Error = ModelError;

    fn try_from(values: Vec<f32>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<Embedding> for Vec<f32> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

pub(crate) fn unit_vector(values: &[f64]) -> Result<Vec<f64>, ModelError> {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(ModelError::DegenerateVector);
    }
    Ok(values.iter().map(|v| v / norm).collect())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Rescales `e` to unit Euclidean norm.
pub fn normalize(e: &Embedding) -> Result<Embedding, ModelError> {
    Embedding::from_f64(&e.unit_f64()?)
}

/// `1 - cos(u, v)`, clamped to `[0, 2]`.
pub fn cosine_distance(u: &Embedding, v: &Embedding) -> Result<f64, ModelError> {
    if u.dim() != v.dim() {
        return Err(ModelError::DimensionMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(ModelError::DegenerateVector);
    }
    let cos = dot(&u.to_f64(), &v.to_f64()) / (nu * nv);
    Ok((1.0 - cos).clamp(0.0, 2.0))
}

/// Where a pair's verb came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    LlmReply,
    GoldInjected,
}

impl PairSource {
    pub fn as_str(self) -> &'static str {
        match self {
            PairSource::LlmReply => "llm_reply",
            PairSource::GoldInjected => "gold_injected",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "llm_reply" => Some(PairSource::LlmReply),
            "gold_injected" => Some(PairSource::GoldInjected),
            _ => None,
        }
    }
}

impl fmt::Display for PairSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identity of a pair node: the `(image, verb)` tuple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairKey {
    pub image: String,
    pub verb: String,
}

impl PairKey {
    pub fn new(image: impl Into<String>, verb: impl Into<String>) -> Self {
        Self {
            image: image.into(),
            verb: verb.into(),
        }
    }
}

/// One `<image, verb>` observation with its joint embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct PairNode {
    pub image_id: String,
    pub verb: String,
    pub embedding: Embedding,
    pub source: PairSource,
}

impl PairNode {
    pub fn new(image_id: impl Into<String>, verb: impl AsRef<str>, embedding: Embedding, source: PairSource) -> Self {
        Self {
            image_id: image_id.into(),
            verb: normalize_verb(verb.as_ref()),
            embedding,
            source,
        }
    }

    pub fn key(&self) -> PairKey {
        PairKey::new(self.image_id.clone(), self.verb.clone())
    }
}

/// A set of pair nodes judged to share one sense, with its derived verb set,
/// image set and unit-norm centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct SenseCluster {
    pub id: usize,
    members: Vec<PairKey>,
    verbs: BTreeSet<String>,
    images: BTreeSet<String>,
    centroid: Embedding,
}

impl SenseCluster {
    /// Members are stored sorted; verb and image sets are derived from them.
    pub fn new(id: usize, mut members: Vec<PairKey>, centroid: Embedding) -> Self {
        members.sort();
        members.dedup();
        let verbs = members.iter().map(|m| m.verb.clone()).collect();
        let images = members.iter().map(|m| m.image.clone()).collect();
        Self {
            id,
            members,
            verbs,
            images,
            centroid,
        }
    }

    pub fn members(&self) -> &[PairKey] {
        &self.members
    }

    pub fn verbs(&self) -> &BTreeSet<String> {
        &self.verbs
    }

    pub fn images(&self) -> &BTreeSet<String> {
        &self.images
    }

    pub fn centroid(&self) -> &Embedding {
        &self.centroid
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Result of the two-step clustering.
///
/// Step-1 clusters carry globally unique ids `0..M`, numbered in verb order
/// and then in per-verb label order. `step1_to_final[id]` names the final
/// cluster that absorbed Step-1 cluster `id`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub config: ClusteringConfig,
    pub lexicon_size: usize,
    pub step1: BTreeMap<String, Vec<SenseCluster>>,
    pub step1_silhouettes: BTreeMap<String, f64>,
    pub step1_to_final: Vec<usize>,
    pub final_clusters: Vec<SenseCluster>,
    pub final_silhouette: f64,
    pub chosen_ratio: f64,
}

impl ClusterModel {
    pub fn algorithm(&self) -> Algorithm {
        self.config.algorithm
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    /// Step-1 clusters in id order.
    pub fn step1_clusters(&self) -> impl Iterator<Item = &SenseCluster> {
        self.step1.values().flatten()
    }

    pub fn step1_count(&self) -> usize {
        self.step1.values().map(Vec::len).sum()
    }

    /// Final cluster containing a node, if the node is part of the model.
    pub fn final_cluster_of(&self, key: &PairKey) -> Option<usize> {
        let clusters = self.step1.get(&key.verb)?;
        clusters
            .iter()
            .find(|c| c.members.binary_search(key).is_ok())
            .map(|c| self.step1_to_final[c.id])
    }

    /// Checks the partition invariants: each node in exactly one Step-1
    /// cluster of its own verb, each Step-1 cluster mapped to exactly one
    /// final cluster, and final membership equal to the union of its parts.
    pub fn validate(&self) -> Result<(), ModelError> {
        let corrupt = |msg: String| Err(ModelError::CorruptModel(msg));
        if self.step1.is_empty() {
            return corrupt("no Step-1 clusters".into());
        }
        if self.final_clusters.is_empty() {
            return corrupt("empty final-cluster list".into());
        }
        let mut seen: HashSet<&PairKey> = HashSet::new();
        let mut next_id = 0;
        let mut dim = None;
        for (verb, clusters) in &self.step1 {
            if clusters.is_empty() {
                return corrupt(format!("verb {verb:?} has an empty Step-1 cluster list"));
            }
            for c in clusters {
                if c.id != next_id {
                    return corrupt(format!(
                        "Step-1 cluster id {} out of sequence (expected {next_id})",
                        c.id
                    ));
                }
                next_id += 1;
                if c.is_empty() {
                    return corrupt(format!("Step-1 cluster {} is empty", c.id));
                }
                check_centroid(c, &mut dim)?;
                for m in &c.members {
                    if &m.verb != verb {
                        return corrupt(format!("node ({}, {}) filed under verb {verb:?}", m.image, m.verb));
                    }
                    if !seen.insert(m) {
                        return corrupt(format!(
                            "node ({}, {}) appears in more than one Step-1 cluster",
                            m.image, m.verb
                        ));
                    }
                }
            }
        }
        if self.step1_to_final.len() != next_id {
            return corrupt(format!(
                "{} Step-1 clusters but {} final assignments",
                next_id,
                self.step1_to_final.len()
            ));
        }
        let mut expected: Vec<BTreeSet<&PairKey>> = vec![BTreeSet::new(); self.final_clusters.len()];
        for c in self.step1_clusters() {
            let target = self.step1_to_final[c.id];
            if target >= self.final_clusters.len() {
                return corrupt(format!(
                    "Step-1 cluster {} assigned to unknown final cluster {target}",
                    c.id
                ));
            }
            expected[target].extend(c.members.iter());
        }
        for (i, f) in self.final_clusters.iter().enumerate() {
            if f.id != i {
                return corrupt(format!("final cluster at position {i} has id {}", f.id));
            }
            if f.is_empty() {
                return corrupt(format!("final cluster {i} has no Step-1 cluster"));
            }
            check_centroid(f, &mut dim)?;
            if !f.members.iter().eq(expected[i].iter().copied()) {
                return corrupt(format!(
                    "final cluster {i} members differ from the union of its Step-1 clusters"
                ));
            }
        }
        Ok(())
    }
}

fn check_centroid(c: &SenseCluster, dim: &mut Option<usize>) -> Result<(), ModelError> {
    let d = c.centroid.dim();
    if *dim.get_or_insert(d) != d {
        return Err(ModelError::CorruptModel(format!(
            "cluster {} centroid has dimension {d}, expected {}",
            c.id,
            dim.unwrap()
        )));
    }
    // f32 storage of a unit vector; 1e-4 leaves room for high-dimensional rounding.
    if (c.centroid.norm() - 1.0).abs() > 1e-4 {
        return Err(ModelError::CorruptModel(format!(
            "cluster {} centroid is not unit norm ({})",
            c.id,
            c.centroid.norm()
        )));
    }
    Ok(())
}

/// Synset id to verb set. Synsets may overlap.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynsetLexicon {
    synsets: BTreeMap<String, BTreeSet<String>>,
    by_verb: HashMap<String, BTreeSet<String>>,
}

impl SynsetLexicon {
    pub fn new<I, V, S>(synsets: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (S, V)>,
        V: IntoIterator,
        V::Item: AsRef<str>,
        S: Into<String>,
    {
        let mut out = Self::default();
        for (id, verbs) in synsets {
            let id = id.into();
            let verbs: BTreeSet<String> = verbs
                .into_iter()
                .map(|v| normalize_verb(v.as_ref()))
                .filter(|v| !v.is_empty())
                .collect();
            if verbs.is_empty() {
                return Err(ModelError::EmptySynset(id));
            }
            for v in &verbs {
                out.by_verb.entry(v.clone()).or_default().insert(id.clone());
            }
            out.synsets.entry(id).or_default().extend(verbs);
        }
        Ok(out)
    }

    pub fn synsets(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.synsets
    }

    pub fn len(&self) -> usize {
        self.synsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.synsets.is_empty()
    }

    /// Synset ids containing `verb`.
    pub fn synsets_of(&self, verb: &str) -> Option<&BTreeSet<String>> {
        self.by_verb.get(&normalize_verb(verb))
    }

    /// True when the two verbs are equal or share at least one synset.
    pub fn shares_synset(&self, a: &str, b: &str) -> bool {
        let (a, b) = (normalize_verb(a), normalize_verb(b));
        if a == b {
            return true;
        }
        match (self.by_verb.get(&a), self.by_verb.get(&b)) {
            (Some(x), Some(y)) => !x.is_disjoint(y),
            _ => false,
        }
    }
}

/// One image's ranked verb predictions from a system under evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionRecord {
    pub image_id: String,
    pub gold_verb: String,
    ranked_verbs: Vec<String>,
}

impl PredictionRecord {
    /// Normalizes verbs and drops repeated ranks, keeping first occurrences.
    pub fn new<I, S>(image_id: impl Into<String>, gold_verb: &str, ranked: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let image_id = image_id.into();
        let gold_verb = normalize_verb(gold_verb);
        if gold_verb.is_empty() {
            return Err(ModelError::EmptyVerb(gold_verb));
        }
        let mut seen = HashSet::new();
        let ranked_verbs: Vec<String> = ranked
            .into_iter()
            .map(|v| normalize_verb(v.as_ref()))
            .filter(|v| !v.is_empty() && seen.insert(v.clone()))
            .collect();
        if ranked_verbs.is_empty() {
            return Err(ModelError::EmptyRanking(image_id));
        }
        Ok(Self {
            image_id,
            gold_verb,
            ranked_verbs,
        })
    }

    pub fn ranked_verbs(&self) -> &[String] {
        &self.ranked_verbs
    }

    pub fn top(&self, k: usize) -> &[String] {
        &self.ranked_verbs[..k.min(self.ranked_verbs.len())]
    }
}
