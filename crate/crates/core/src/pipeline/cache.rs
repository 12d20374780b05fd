//! On-disk response cache: `<root>/<backend>/<image-hash>/<prompt-hash>[.k].json`.
//!
//! Self-consistency candidates carry the `.k` suffix (from 0); single-call variants do not,
//! so variants sharing a prompt text never collide.

use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub backend: String,
    pub variant: String,
    pub candidate: Option<usize>,
    pub response: String,
}

#[derive(Debug, Clone, Copy)]
pub struct CacheKey<'a> {
    pub backend: &'a str,
    pub image_hash: &'a str,
    pub prompt_hash: &'a str,
    pub variant: &'a str,
    pub candidate: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    root: PathBuf,
}

fn path_safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

impl ResponseCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ResponseCache { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &CacheKey<'_>) -> PathBuf {
        let file = match key.candidate {
            Some(k) => format!("{}.{k}.json", key.prompt_hash),
            None => format!("{}.json", key.prompt_hash),
        };
        self.root.join(path_safe(key.backend)).join(key.image_hash).join(file)
    }

    /// A cached response, or `None` when absent or unreadable.
    pub fn get(&self, key: &CacheKey<'_>) -> Option<String> {
        let text = std::fs::read_to_string(self.path_for(key)).ok()?;
        let entry: CacheEntry = serde_json::from_str(&text).ok()?;
        (entry.backend == key.backend && entry.variant == key.variant && entry.candidate == key.candidate)
            .then_some(entry.response)
    }

    pub fn put(&self, key: &CacheKey<'_>, response: &str) -> io::Result<()> {
        let path = self.path_for(key);
        let dir = path.parent().expect("cache paths have a parent");
        std::fs::create_dir_all(dir)?;
        let entry = CacheEntry {
            backend: key.backend.into(),
            variant: key.variant.into(),
            candidate: key.candidate,
            response: response.into(),
        };
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        std::fs::write(&tmp, serde_json::to_vec_pretty(&entry)?)?;
        std::fs::rename(tmp, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path());
        let key = CacheKey { backend: "gpt/4.1", image_hash: "abc", prompt_hash: "def", variant: "baseline", candidate: None };
        assert_eq!(cache.path_for(&key), dir.path().join("gpt_4.1").join("abc").join("def.json"));
        assert!(cache.get(&key).is_none());
        cache.put(&key, "reply").unwrap();
        assert_eq!(cache.get(&key).as_deref(), Some("reply"));

        let k2 = CacheKey { candidate: Some(2), variant: "self-consistency", ..key };
        assert!(cache.path_for(&k2).ends_with("def.2.json"));
        assert!(cache.get(&k2).is_none());
    }

    #[test]
    fn sha256_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
