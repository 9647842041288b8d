//! Defaults from a TOML file, overridden by flags.
//!
//! ```toml
//! lexicon = "lexicon.txt"   # relative paths resolve against this file
//! synsets = "synsets.tsv"
//! pairs = "pairs.tsv"
//! algorithm = "kmeans"
//! seed = 7
//! k_min = 2
//! k_max = 16
//! ratios = [0.6, 0.8, 1.0]
//! ks = [1, 5]
//!
//! [endpoint]
//! url = "https://example.org/v1/chat/completions"
//! model = "some-model"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use verbsense::acquire::{EndpointConfig, PromptKind};
use verbsense::Algorithm;

use crate::UsageError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub lexicon: Option<PathBuf>,
    pub synsets: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
    pub algorithm: Option<Algorithm>,
    pub seed: Option<u64>,
    pub k_min: Option<usize>,
    pub k_max: Option<usize>,
    pub ratios: Option<Vec<f64>>,
    pub restarts: Option<usize>,
    pub max_iters: Option<usize>,
    pub tolerance: Option<f64>,
    pub ks: Option<Vec<usize>>,
    pub prompt: Option<PromptKind>,
    pub cache_dir: Option<PathBuf>,
    pub endpoint: Option<EndpointConfig>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, UsageError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.lexicon, &mut cfg.synsets, &mut cfg.pairs, &mut cfg.cache_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// `flag`, else `file`, else a usage error naming both spellings.
pub fn require<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T, UsageError> {
    flag.or(file).ok_or_else(|| {
        UsageError(format!(
            "missing --{name} (or `{}` in the config file)",
            name.replace('-', "_")
        ))
    })
}
