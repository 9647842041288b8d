//! Readers and writers for every corpus artifact.
//!
//! | artifact | format |
//! |---|---|
//! | verb lexicon | one verb per line |
//! | pairs | `image \t verb \t source \t v1,v2,...` per line, or the binary variant, plus a JSON sidecar manifest |
//! | cluster model | pretty JSON with stable key order |
//! | predictions | `image \t gold \t v1,v2,...` |
//! | synsets | `synset_id \t v1,v2,...` |
//! | raw references | `image \t v1,v2,...` |
//! | gold labels | `image \t verb` |
//! | similarity matrix | header `image_id \t verb...`, then `image \t score...` |
//!
//! Readers never drop records silently: every rejection names the file and
//! the line (or record) where it happened.

mod model_file;
mod pairs;
mod tables;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::ModelError;

pub use model_file::{read_cluster_document, read_cluster_model, write_cluster_model, ModelDocument};
pub use pairs::{
    manifest_path, read_pairs, write_pairs, write_pairs_binary, CorpusManifest, PairsFormat, BINARY_MAGIC,
};
pub use tables::{
    read_gold, read_lexicon, read_predictions, read_raw_references, read_similarity_matrix, read_synsets,
    write_lexicon, write_synsets, SimilarityMatrix,
};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: expected {expected} embedding values, found {found}")]
    DimMismatch {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}:{line}: unknown verb {verb:?}")]
    UnknownVerb { path: PathBuf, line: usize, verb: String },
    #[error("{path}:{line}: duplicate pair ({image}, {verb})")]
    DuplicatePair {
        path: PathBuf,
        line: usize,
        image: String,
        verb: String,
    },
    #[error("{path}: manifest mismatch: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("{path}: corrupt cluster model: {message}")]
    CorruptModel { path: PathBuf, message: String },
}

impl FormatError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn malformed(path: &Path, line: usize, message: impl Into<String>) -> Self {
        FormatError::Malformed {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn from_model(path: &Path, line: usize, e: ModelError) -> Self {
        Self::malformed(path, line, e.to_string())
    }

    /// True for errors caused by the content of an input, as opposed to the
    /// file system.
    pub fn is_validation(&self) -> bool {
        !matches!(self, FormatError::Io { .. })
    }
}

/// Lines of a text file with 1-based numbers, skipping blank lines and
/// `#` comments.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
}

pub(crate) fn read_text(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}

/// Writes through a temporary file in the same directory and renames it into
/// place, so readers never observe a half-written artifact.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| FormatError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| FormatError::io(path, e))?;
    tmp.persist(path).map_err(|e| FormatError::io(path, e.error))?;
    Ok(())
}

/// Splits a comma list into trimmed, non-empty items.
pub(crate) fn comma_list(field: &str) -> Vec<&str> {
    field.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}
