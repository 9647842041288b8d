use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{content_lines, read_text, write_atomic, FormatError};
use crate::model::{normalize_verb, Embedding, PairNode, PairSource, VerbLexicon};

/// First bytes of a binary pairs file.
pub const BINARY_MAGIC: &[u8; 8] = b"VSPAIRB1";

/// Sidecar metadata stored next to a pairs file as `<file>.manifest.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub created_by: String,
    pub embedding_dim: usize,
    pub pair_count: usize,
    pub verb_lexicon_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairsFormat {
    Text,
    Binary,
}

impl std::str::FromStr for PairsFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "text" => Ok(PairsFormat::Text),
            "binary" => Ok(PairsFormat::Binary),
            other => Err(format!("unknown pairs format {other:?} (expected text or binary)")),
        }
    }
}

pub fn manifest_path(pairs: &Path) -> PathBuf {
    let mut name = pairs.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn read_manifest(path: &Path) -> Result<Option<CorpusManifest>, FormatError> {
    let mpath = manifest_path(path);
    if !mpath.exists() {
        return Ok(None);
    }
    let text = read_text(&mpath)?;
    let manifest: CorpusManifest = serde_json::from_str(&text).map_err(|e| FormatError::Manifest {
        path: mpath.clone(),
        message: e.to_string(),
    })?;
    if manifest.embedding_dim == 0 {
        return Err(FormatError::Manifest {
            path: mpath,
            message: "embedding_dim must be positive".into(),
        });
    }
    Ok(Some(manifest))
}

struct Collector<'a> {
    path: &'a Path,
    lexicon: &'a VerbLexicon,
    dim: Option<usize>,
    seen: HashSet<(String, String)>,
    nodes: Vec<PairNode>,
}

impl Collector<'_> {
    fn push(
        &mut self,
        line: usize,
        image: &str,
        verb: &str,
        source: PairSource,
        values: Vec<f32>,
    ) -> Result<(), FormatError> {
        let path = self.path;
        let image = image.trim();
        if image.is_empty() {
            return Err(FormatError::malformed(path, line, "empty image id"));
        }
        let verb_norm = normalize_verb(verb);
        if !self.lexicon.contains(&verb_norm) {
            return Err(FormatError::UnknownVerb {
                path: path.to_path_buf(),
                line,
                verb: verb.trim().to_string(),
            });
        }
        let expected = *self.dim.get_or_insert(values.len());
        if values.len() != expected {
            return Err(FormatError::DimMismatch {
                path: path.to_path_buf(),
                line,
                expected,
                found: values.len(),
            });
        }
        let embedding = Embedding::new(values).map_err(|e| FormatError::from_model(path, line, e))?;
        if !self.seen.insert((image.to_string(), verb_norm.clone())) {
            return Err(FormatError::DuplicatePair {
                path: path.to_path_buf(),
                line,
                image: image.to_string(),
                verb: verb_norm,
            });
        }
        self.nodes.push(PairNode::new(image, verb_norm, embedding, source));
        Ok(())
    }
}

/// Reads a pairs file in either format, validating every record against the
/// lexicon and the manifest (when a sidecar manifest exists; otherwise the
/// dimension is taken from the first record).
pub fn read_pairs(path: &Path, lexicon: &VerbLexicon) -> Result<(Vec<PairNode>, CorpusManifest), FormatError> {
    let manifest = read_manifest(path)?;
    if let Some(m) = &manifest {
        if m.verb_lexicon_hash != lexicon.digest() {
            return Err(FormatError::Manifest {
                path: manifest_path(path),
                message: "corpus was written against a different verb lexicon".into(),
            });
        }
    }
    let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
    let mut collector = Collector {
        path,
        lexicon,
        dim: manifest.as_ref().map(|m| m.embedding_dim),
        seen: HashSet::new(),
        nodes: Vec::new(),
    };
    if bytes.starts_with(BINARY_MAGIC) {
        parse_binary(&bytes, &mut collector)?;
    } else {
        let text = String::from_utf8(bytes).map_err(|_| FormatError::malformed(path, 0, "file is not UTF-8 text"))?;
        parse_text(&text, &mut collector)?;
    }
    let nodes = collector.nodes;
    let manifest = match manifest {
        Some(m) => {
            if m.pair_count != nodes.len() {
                return Err(FormatError::Manifest {
                    path: manifest_path(path),
                    message: format!(
                        "pair_count is {} but the file holds {} records",
                        m.pair_count,
                        nodes.len()
                    ),
                });
            }
            m
        }
        None => CorpusManifest {
            created_by: "unknown".into(),
            embedding_dim: collector.dim.unwrap_or(0),
            pair_count: nodes.len(),
            verb_lexicon_hash: lexicon.digest(),
        },
    };
    Ok((nodes, manifest))
}

fn parse_text(text: &str, out: &mut Collector<'_>) -> Result<(), FormatError> {
    let path = out.path;
    for (line, content) in content_lines(text) {
        let fields: Vec<&str> = content.split('\t').collect();
        if fields.len() != 4 {
            return Err(FormatError::malformed(
                path,
                line,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let source = PairSource::parse(fields[2])
            .ok_or_else(|| FormatError::malformed(path, line, format!("unknown source flag {:?}", fields[2].trim())))?;
        let values = fields[3]
            .split(',')
            .map(|v| v.trim().parse::<f32>())
            .collect::<Result<Vec<f32>, _>>()
            .map_err(|e| FormatError::malformed(path, line, format!("bad embedding value: {e}")))?;
        out.push(line, fields[0], fields[1], source, values)?;
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let slice = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(slice)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn string(&mut self) -> Option<&'a str> {
        let len = self.u32()? as usize;
        std::str::from_utf8(self.take(len)?).ok()
    }
}

fn parse_binary(bytes: &[u8], out: &mut Collector<'_>) -> Result<(), FormatError> {
    let path = out.path;
    let mut cur = Cursor {
        bytes,
        pos: BINARY_MAGIC.len(),
    };
    let header = |_| FormatError::malformed(path, 0, "truncated binary header");
    let dim = cur.u32().ok_or(()).map_err(header)? as usize;
    let count = cur.u64().ok_or(()).map_err(header)?;
    let expected = *out.dim.get_or_insert(dim);
    if expected != dim {
        return Err(FormatError::DimMismatch {
            path: path.to_path_buf(),
            line: 0,
            expected,
            found: dim,
        });
    }
    for record in 1..=count as usize {
        let truncated = || FormatError::malformed(path, record, "truncated binary record");
        let image = cur.string().ok_or_else(truncated)?;
        let verb = cur.string().ok_or_else(truncated)?;
        let source = match cur.take(1).ok_or_else(truncated)?[0] {
            0 => PairSource::LlmReply,
            1 => PairSource::GoldInjected,
            b => return Err(FormatError::malformed(path, record, format!("unknown source byte {b}"))),
        };
        let raw = cur.take(dim * 4).ok_or_else(truncated)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push(record, image, verb, source, values)?;
    }
    if cur.pos != bytes.len() {
        return Err(FormatError::malformed(
            path,
            count as usize + 1,
            "trailing bytes after last record",
        ));
    }
    Ok(())
}

fn check_pairs(path: &Path, pairs: &[PairNode]) -> Result<usize, FormatError> {
    let dim = pairs
        .first()
        .ok_or_else(|| FormatError::malformed(path, 0, "refusing to write an empty corpus"))?
        .embedding
        .dim();
    let mut seen = HashSet::new();
    for (i, p) in pairs.iter().enumerate() {
        if p.embedding.dim() != dim {
            return Err(FormatError::DimMismatch {
                path: path.to_path_buf(),
                line: i + 1,
                expected: dim,
                found: p.embedding.dim(),
            });
        }
        if p.image_id.contains(['\t', '\n']) || p.image_id.trim() != p.image_id || p.image_id.is_empty() {
            return Err(FormatError::malformed(
                path,
                i + 1,
                "image id must be non-empty and free of tabs/newlines",
            ));
        }
        if !seen.insert((&p.image_id, &p.verb)) {
            return Err(FormatError::DuplicatePair {
                path: path.to_path_buf(),
                line: i + 1,
                image: p.image_id.clone(),
                verb: p.verb.clone(),
            });
        }
    }
    Ok(dim)
}

fn write_manifest(path: &Path, manifest: &CorpusManifest) -> Result<(), FormatError> {
    let mut json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    json.push('\n');
    write_atomic(&manifest_path(path), json.as_bytes())
}

/// Writes pairs in the text format together with the sidecar manifest.
pub fn write_pairs(
    path: &Path,
    pairs: &[PairNode],
    lexicon: &VerbLexicon,
    created_by: &str,
) -> Result<CorpusManifest, FormatError> {
    let dim = check_pairs(path, pairs)?;
    let mut out = String::new();
    for p in pairs {
        let _ = write!(out, "{}\t{}\t{}\t", p.image_id, p.verb, p.source);
        for (i, v) in p.embedding.values().iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())?;
    let manifest = CorpusManifest {
        created_by: created_by.to_string(),
        embedding_dim: dim,
        pair_count: pairs.len(),
        verb_lexicon_hash: lexicon.digest(),
    };
    write_manifest(path, &manifest)?;
    Ok(manifest)
}

/// Writes pairs in the little-endian binary format with the sidecar manifest.
pub fn write_pairs_binary(
    path: &Path,
    pairs: &[PairNode],
    lexicon: &VerbLexicon,
    created_by: &str,
) -> Result<CorpusManifest, FormatError> {
    let dim = check_pairs(path, pairs)?;
    let mut out = Vec::with_capacity(20 + pairs.len() * (dim * 4 + 32));
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(pairs.len() as u64).to_le_bytes());
    for p in pairs {
        for s in [&p.image_id, &p.verb] {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        out.push(match p.source {
            PairSource::LlmReply => 0,
            PairSource::GoldInjected => 1,
        });
        for v in p.embedding.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_atomic(path, &out)?;
    let manifest = CorpusManifest {
        created_by: created_by.to_string(),
        embedding_dim: dim,
        pair_count: pairs.len(),
        verb_lexicon_hash: lexicon.digest(),
    };
    write_manifest(path, &manifest)?;
    Ok(manifest)
}
