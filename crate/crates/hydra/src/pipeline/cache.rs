//! Content-addressed response cache.
//!
//! Responses are stored per request key (a hash over backend fingerprint,
//! sampling settings, seed, and prompt) as a JSON array indexed by sample
//! number. Corrupt entries degrade to misses with a warning.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::Result;
use crate::hashing::sha256_hex;
use crate::llm::GenerationRequest;

pub struct LlmCache {
    dir: PathBuf,
    hits: AtomicU64,
    misses: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
}

/// Request key: every field that can change the response participates.
pub fn cache_key(fingerprint: &str, req: &GenerationRequest) -> String {
    let material = format!(
        "{fingerprint}\u{1f}{}\u{1f}{}\u{1f}{}\u{1f}{}",
        req.temperature, req.max_tokens, req.seed, req.prompt
    );
    sha256_hex(material.as_bytes())
}

impl LlmCache {
    pub fn open(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir)?;
        Ok(LlmCache {
            dir,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        })
    }

    fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// All samples `0..n` for the key, or a miss.
    pub fn get(&self, key: &str, n: usize) -> Option<Vec<String>> {
        let path = self.entry_path(key);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(_) => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                return None;
            }
        };
        let samples: Vec<String> = match serde_json::from_slice(&bytes) {
            Ok(s) => s,
            Err(e) => {
                log::warn!(
                    "corrupt cache entry {}: {e}; treating as miss",
                    path.display()
                );
                self.misses.fetch_add(1, Ordering::Relaxed);
                return None;
            }
        };
        if samples.len() < n {
            self.misses.fetch_add(1, Ordering::Relaxed);
            return None;
        }
        self.hits.fetch_add(1, Ordering::Relaxed);
        Some(samples[..n].to_vec())
    }

    /// Store samples for the key, replacing any shorter entry.
    pub fn put(&self, key: &str, samples: &[String]) {
        let path = self.entry_path(key);
        if let Ok(bytes) = std::fs::read(&path) {
            if let Ok(existing) = serde_json::from_slice::<Vec<String>>(&bytes) {
                if existing.len() >= samples.len() {
                    return;
                }
            }
        }
        match serde_json::to_vec(samples) {
            Ok(bytes) => {
                if let Err(e) = std::fs::write(&path, bytes) {
                    log::warn!("failed to write cache entry {}: {e}", path.display());
                }
            }
            Err(e) => log::warn!("failed to serialize cache entry: {e}"),
        }
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(prompt: &str) -> GenerationRequest {
        GenerationRequest {
            prompt: prompt.into(),
            n_samples: 2,
            temperature: 1.0,
            max_tokens: 32,
            seed: 5,
        }
    }

    #[test]
    fn put_then_get_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cache = LlmCache::open(dir.path().to_path_buf()).unwrap();
        let key = cache_key("sim:test", &request("hello"));
        assert!(cache.get(&key, 2).is_none());
        cache.put(&key, &["first".into(), "second".into()]);
        assert_eq!(cache.get(&key, 2).unwrap(), vec!["first", "second"]);
        assert_eq!(cache.get(&key, 1).unwrap(), vec!["first"]);
        let stats = cache.stats();
        assert_eq!(stats.hits, 2);
        assert_eq!(stats.misses, 1);
    }

    #[test]
    fn corrupt_entry_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = LlmCache::open(dir.path().to_path_buf()).unwrap();
        let key = cache_key("sim:test", &request("hello"));
        std::fs::write(dir.path().join(format!("{key}.json")), b"{not json").unwrap();
        assert!(cache.get(&key, 1).is_none());
        assert_eq!(cache.stats().misses, 1);
    }

    #[test]
    fn keys_separate_prompts_seeds_and_settings() {
        let base = request("hello");
        let mut other_seed = base.clone();
        other_seed.seed = 6;
        let mut other_temp = base.clone();
        other_temp.temperature = 0.0;
        let k0 = cache_key("f", &base);
        assert_ne!(k0, cache_key("f", &request("bye")));
        assert_ne!(k0, cache_key("f", &other_seed));
        assert_ne!(k0, cache_key("f", &other_temp));
        assert_ne!(k0, cache_key("g", &base));
    }

    #[test]
    fn shorter_put_never_clobbers_longer_entry() {
        let dir = tempfile::tempdir().unwrap();
        let cache = LlmCache::open(dir.path().to_path_buf()).unwrap();
        let key = "abc123";
        cache.put(key, &["a".into(), "b".into(), "c".into()]);
        cache.put(key, &["a".into()]);
        assert_eq!(cache.get(key, 3).unwrap().len(), 3);
    }
}
