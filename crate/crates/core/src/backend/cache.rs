use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, ChatBackend, ChatRequest, Turn};

#[derive(Serialize)]
struct KeyMaterial<'a> {
    model: &'a str,
    temperature: f64,
    max_output_tokens: Option<u32>,
    messages: &'a [Turn],
}

/// Lowercase hex SHA-256 of the canonical JSON serialization of the request
/// (model, temperature, token limit and every message with its role).
pub fn cache_key(request: &ChatRequest) -> String {
    let p = request.params();
    let material = KeyMaterial {
        model: &p.model,
        temperature: p.temperature,
        max_output_tokens: p.max_output_tokens,
        messages: request.messages(),
    };
    let bytes = serde_json::to_vec(&material).expect("request serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestSummary {
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: Option<u32>,
    pub message_count: usize,
    pub last_user_message: String,
}

/// On-disk body of `<cache-dir>/<key>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub request: RequestSummary,
    pub response: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CacheStats {
    pub entries: usize,
    pub bytes: u64,
}

/// Content-addressed response store, one JSON file per key, no eviction.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)
            .map_err(|e| BackendError::Cache(format!("{}: {e}", dir.display())))?;
        Ok(ResponseCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<CacheEntry>, BackendError> {
        let path = self.entry_path(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(BackendError::Cache(format!("{}: {e}", path.display()))),
        };
        let entry: CacheEntry = serde_json::from_slice(&bytes)
            .map_err(|e| BackendError::Cache(format!("{}: {e}", path.display())))?;
        if entry.key != key {
            return Err(BackendError::Cache(format!(
                "{}: stored key {} does not match file name",
                path.display(),
                entry.key
            )));
        }
        Ok(Some(entry))
    }

    /// Writes through a temp file and rename so readers never see a torn entry.
    pub fn put(&self, entry: &CacheEntry) -> Result<(), BackendError> {
        let path = self.entry_path(&entry.key);
        let tmp = self.dir.join(format!(
            ".{}.{}.{:?}.tmp",
            entry.key,
            std::process::id(),
            std::thread::current().id()
        ));
        let body = serde_json::to_vec_pretty(entry).expect("entry serializes");
        let write = || -> std::io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&body)?;
            f.write_all(b"\n")?;
            f.sync_all()?;
            fs::rename(&tmp, &path)
        };
        write().map_err(|e| {
            let _ = fs::remove_file(&tmp);
            BackendError::Cache(format!("{}: {e}", path.display()))
        })
    }

    fn entry_files(&self) -> Result<Vec<PathBuf>, BackendError> {
        let read = fs::read_dir(&self.dir)
            .map_err(|e| BackendError::Cache(format!("{}: {e}", self.dir.display())))?;
        let mut files = Vec::new();
        for item in read {
            let item = item.map_err(|e| BackendError::Cache(e.to_string()))?;
            let path = item.path();
            let is_entry = path.extension().is_some_and(|x| x == "json")
                && path
                    .file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| !n.starts_with('.'));
            if is_entry {
                files.push(path);
            }
        }
        Ok(files)
    }

    pub fn stats(&self) -> Result<CacheStats, BackendError> {
        let mut stats = CacheStats::default();
        for path in self.entry_files()? {
            let meta = fs::metadata(&path)
                .map_err(|e| BackendError::Cache(format!("{}: {e}", path.display())))?;
            stats.entries += 1;
            stats.bytes += meta.len();
        }
        Ok(stats)
    }

    /// Removes every entry; returns how many were deleted.
    pub fn clear(&self) -> Result<usize, BackendError> {
        let files = self.entry_files()?;
        for path in &files {
            fs::remove_file(path)
                .map_err(|e| BackendError::Cache(format!("{}: {e}", path.display())))?;
        }
        Ok(files.len())
    }
}

/// Serves repeated requests from a [`ResponseCache`] and forwards misses to
/// the wrapped backend.
#[derive(Debug)]
pub struct CachedBackend<B> {
    inner: B,
    cache: ResponseCache,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl<B: ChatBackend> CachedBackend<B> {
    pub fn new(inner: B, cache: ResponseCache) -> Self {
        CachedBackend {
            inner,
            cache,
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    /// Requests forwarded upstream.
    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::SeqCst)
    }
}

impl<B: ChatBackend> ChatBackend for CachedBackend<B> {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let key = cache_key(request);
        if let Some(entry) = self.cache.get(&key)? {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(entry.response);
        }
        self.misses.fetch_add(1, Ordering::SeqCst);
        let response = self.inner.complete(request)?;
        let p = request.params();
        self.cache.put(&CacheEntry {
            key,
            request: RequestSummary {
                model: p.model.clone(),
                temperature: p.temperature,
                max_output_tokens: p.max_output_tokens,
                message_count: request.messages().len(),
                last_user_message: request.last_user_message().to_string(),
            },
            response: response.clone(),
            created_at: Utc::now(),
        })?;
        Ok(response)
    }
}
