//! Content-addressed response store: `<root>/<first two hex>/<hash>.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedResponse {
    pub key: String,
    pub model_id: String,
    pub raw_response: String,
    pub latency_ms: u64,
    pub attempts: u32,
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    root: PathBuf,
}

impl ResponseCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        let shard = key.get(..2).unwrap_or("__");
        self.root.join(shard).join(format!("{key}.json"))
    }

    /// A missing or unreadable entry is a miss.
    pub fn get(&self, key: &str) -> Option<CachedResponse> {
        let text = fs::read_to_string(self.path_for(key)).ok()?;
        match serde_json::from_str::<CachedResponse>(&text) {
            Ok(c) if c.key == key => Some(c),
            _ => {
                log::warn!("ignoring corrupt cache entry for {key}");
                None
            }
        }
    }

    /// Atomic: readers never see a partial entry.
    pub fn put(&self, entry: &CachedResponse) -> std::io::Result<()> {
        crate::fsutil::write_atomic(&self.path_for(&entry.key), serde_json::to_string(entry)?.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = ResponseCache::new(dir.path());
        let e = CachedResponse {
            key: "ab12cd".into(),
            model_id: "m".into(),
            raw_response: "{}".into(),
            latency_ms: 5,
            attempts: 2,
        };
        assert!(c.get("ab12cd").is_none());
        c.put(&e).unwrap();
        assert!(dir.path().join("ab").join("ab12cd.json").is_file());
        assert_eq!(c.get("ab12cd"), Some(e));
        fs::write(c.path_for("ab12cd"), "{trunc").unwrap();
        assert!(c.get("ab12cd").is_none());
    }
}
