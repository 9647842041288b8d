use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_text, write_atomic, FormatError};
use crate::cluster::ClusteringConfig;
use crate::model::{ClusterModel, Embedding, ModelError, PairKey, SenseCluster};

const FORMAT_TAG: &str = "verbsense-cluster-model/1";

/// A cluster model together with the provenance recorded beside it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDocument {
    pub toolkit_version: String,
    /// Resolved run configuration of the command that produced the model.
    pub run_config: serde_json::Value,
    pub model: ClusterModel,
}

#[derive(Serialize, Deserialize)]
struct WireCluster {
    id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    step1_ids: Option<Vec<usize>>,
    members: Vec<(String, String)>,
    centroid: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct WireVerb {
    silhouette: f64,
    clusters: Vec<WireCluster>,
}

#[derive(Serialize, Deserialize)]
struct WireModel {
    format: String,
    toolkit_version: String,
    run_config: serde_json::Value,
    config: ClusteringConfig,
    lexicon_size: usize,
    chosen_ratio: f64,
    final_silhouette: f64,
    step1: BTreeMap<String, WireVerb>,
    #[serde(rename = "final")]
    final_clusters: Vec<WireCluster>,
}

fn wire_cluster(c: &SenseCluster, step1_ids: Option<Vec<usize>>) -> WireCluster {
    WireCluster {
        id: c.id,
        step1_ids,
        members: c.members().iter().map(|m| (m.image.clone(), m.verb.clone())).collect(),
        centroid: c.centroid().values().to_vec(),
    }
}

fn from_wire(w: WireCluster) -> Result<SenseCluster, ModelError> {
    let centroid =
        Embedding::new(w.centroid).map_err(|e| ModelError::CorruptModel(format!("cluster {} centroid: {e}", w.id)))?;
    let n = w.members.len();
    let members: Vec<PairKey> = w.members.into_iter().map(|(i, v)| PairKey::new(i, v)).collect();
    let cluster = SenseCluster::new(w.id, members, centroid);
    if cluster.len() != n {
        return Err(ModelError::CorruptModel(format!(
            "cluster {} lists a member twice",
            w.id
        )));
    }
    Ok(cluster)
}

/// Serializes the model as pretty JSON with a fixed key order, so equal
/// models always produce identical bytes.
pub fn write_cluster_model(
    model: &ClusterModel,
    run_config: &serde_json::Value,
    path: &Path,
) -> Result<(), FormatError> {
    model.validate().map_err(|e| FormatError::CorruptModel {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); model.final_clusters.len()];
    for (step1_id, &f) in model.step1_to_final.iter().enumerate() {
        parts[f].push(step1_id);
    }
    let wire = WireModel {
        format: FORMAT_TAG.into(),
        toolkit_version: crate::TOOLKIT_VERSION.into(),
        run_config: run_config.clone(),
        config: model.config.clone(),
        lexicon_size: model.lexicon_size,
        chosen_ratio: model.chosen_ratio,
        final_silhouette: model.final_silhouette,
        step1: model
            .step1
            .iter()
            .map(|(verb, clusters)| {
                let w = WireVerb {
                    silhouette: model.step1_silhouettes.get(verb).copied().unwrap_or(0.0),
                    clusters: clusters.iter().map(|c| wire_cluster(c, None)).collect(),
                };
                (verb.clone(), w)
            })
            .collect(),
        final_clusters: model
            .final_clusters
            .iter()
            .zip(parts)
            .map(|(c, p)| wire_cluster(c, Some(p)))
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&wire).expect("model serializes");
    json.push('\n');
    write_atomic(path, json.as_bytes())
}

pub fn read_cluster_document(path: &Path) -> Result<ModelDocument, FormatError> {
    let text = read_text(path)?;
    let corrupt = |message: String| FormatError::CorruptModel {
        path: path.to_path_buf(),
        message,
    };
    let wire: WireModel = serde_json::from_str(&text).map_err(|e| FormatError::Malformed {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if wire.format != FORMAT_TAG {
        return Err(corrupt(format!("unsupported format tag {:?}", wire.format)));
    }
    let build = || -> Result<ClusterModel, ModelError> {
        let mut step1 = BTreeMap::new();
        let mut step1_silhouettes = BTreeMap::new();
        let mut step1_count = 0;
        for (verb, w) in wire.step1 {
            step1_count += w.clusters.len();
            let clusters = w.clusters.into_iter().map(from_wire).collect::<Result<Vec<_>, _>>()?;
            step1_silhouettes.insert(verb.clone(), w.silhouette);
            step1.insert(verb, clusters);
        }
        let mut step1_to_final = vec![usize::MAX; step1_count];
        let mut final_clusters = Vec::with_capacity(wire.final_clusters.len());
        for (pos, mut w) in wire.final_clusters.into_iter().enumerate() {
            for id in w.step1_ids.take().unwrap_or_default() {
                match step1_to_final.get_mut(id) {
                    Some(slot) if *slot == usize::MAX => *slot = pos,
                    Some(_) => {
                        return Err(ModelError::CorruptModel(format!(
                            "Step-1 cluster {id} assigned to more than one final cluster"
                        )))
                    }
                    None => return Err(ModelError::CorruptModel(format!("unknown Step-1 cluster {id}"))),
                }
            }
            final_clusters.push(from_wire(w)?);
        }
        if let Some(id) = step1_to_final.iter().position(|&f| f == usize::MAX) {
            return Err(ModelError::CorruptModel(format!(
                "Step-1 cluster {id} is not assigned to a final cluster"
            )));
        }
        let model = ClusterModel {
            config: wire.config,
            lexicon_size: wire.lexicon_size,
            step1,
            step1_silhouettes,
            step1_to_final,
            final_clusters,
            final_silhouette: wire.final_silhouette,
            chosen_ratio: wire.chosen_ratio,
        };
        model.validate()?;
        Ok(model)
    };
    let model = build().map_err(|e| match e {
        ModelError::CorruptModel(m) => corrupt(m),
        other => corrupt(other.to_string()),
    })?;
    Ok(ModelDocument {
        toolkit_version: wire.toolkit_version,
        run_config: wire.run_config,
        model,
    })
}

pub fn read_cluster_model(path: &Path) -> Result<ClusterModel, FormatError> {
    Ok(read_cluster_document(path)?.model)
}
