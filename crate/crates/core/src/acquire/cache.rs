use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::AcquireError;

/// Content address of one query: hex SHA-256 over the model id, the prompt
/// digest and the image digest.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn new(model: &str, prompt_digest: &str, image_digest: &str) -> Self {
        let mut h = Sha256::new();
        for part in [model, prompt_digest, image_digest] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        Self(hex::encode(h.finalize()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplyCacheEntry {
    pub key: CacheKey,
    pub model: String,
    pub reply: String,
    /// Seconds since the Unix epoch at write time.
    pub timestamp: u64,
}

/// Write-once reply store: `<dir>/<key[..2]>/<key>.json`.
#[derive(Debug, Clone)]
pub struct ReplyCache {
    dir: PathBuf,
}

impl ReplyCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_of(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(&key.0[..2]).join(format!("{}.json", key.0))
    }

    fn error(&self, path: &Path, e: impl std::fmt::Display) -> AcquireError {
        AcquireError::Cache {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<ReplyCacheEntry>, AcquireError> {
        let path = self.path_of(key);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(self.error(&path, e)),
        };
        let entry: ReplyCacheEntry = serde_json::from_str(&text).map_err(|e| self.error(&path, e))?;
        if &entry.key != key {
            return Err(self.error(&path, "entry key does not match its address"));
        }
        Ok(Some(entry))
    }

    /// Stores a reply unless the key is already present, and returns the
    /// entry that ends up on disk. Existing entries are never replaced.
    pub fn put(&self, key: &CacheKey, model: &str, reply: &str) -> Result<ReplyCacheEntry, AcquireError> {
        if let Some(existing) = self.get(key)? {
            return Ok(existing);
        }
        let path = self.path_of(key);
        let parent = path.parent().expect("cache paths have a parent");
        std::fs::create_dir_all(parent).map_err(|e| self.error(parent, e))?;
        let entry = ReplyCacheEntry {
            key: key.clone(),
            model: model.to_string(),
            reply: reply.to_string(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| self.error(parent, e))?;
        let body = serde_json::to_string_pretty(&entry).expect("entry serializes");
        tmp.write_all(body.as_bytes()).map_err(|e| self.error(&path, e))?;
        match tmp.persist_noclobber(&path) {
            Ok(_) => Ok(entry),
            Err(e) if e.error.kind() == std::io::ErrorKind::AlreadyExists => self
                .get(key)?
                .ok_or_else(|| self.error(&path, "entry vanished after a concurrent write")),
            Err(e) => Err(self.error(&path, e.error)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_separate_their_parts() {
        assert_ne!(CacheKey::new("ab", "c", "d"), CacheKey::new("a", "bc", "d"));
        assert_eq!(CacheKey::new("m", "p", "i"), CacheKey::new("m", "p", "i"));
        assert_eq!(CacheKey::new("m", "p", "i").as_str().len(), 64);
    }

    #[test]
    fn entries_are_write_once() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ReplyCache::new(dir.path());
        let key = CacheKey::new("m", "p", "i");
        assert!(cache.get(&key).unwrap().is_none());
        let first = cache.put(&key, "m", "eating, walking").unwrap();
        let second = cache.put(&key, "m", "something else").unwrap();
        assert_eq!(second.reply, "eating, walking");
        assert_eq!(cache.get(&key).unwrap().unwrap(), first);
    }
}
