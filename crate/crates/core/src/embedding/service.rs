use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{EmbeddingError, EmbeddingProvider, EmbeddingVector, TextItem};
use crate::digest::sha256_hex;
use crate::net::{bounded_map, Endpoint, JsonClient, RetryPolicy};

/// Vectors keyed by `(provider id, content hash)`. Many readers, one
/// writer at a time; persisted as JSON Lines sorted by key.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    entries: RwLock<BTreeMap<String, Vec<f64>>>,
    path: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct CacheRow {
    key: String,
    vector: Vec<f64>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        EmbeddingCache::default()
    }

    /// Open (or start) a cache persisted at `path`.
    pub fn open(path: &Path) -> Result<Self, EmbeddingError> {
        let mut entries = BTreeMap::new();
        if path.exists() {
            let f = std::fs::File::open(path).map_err(|e| EmbeddingError::Io(format!("{}: {e}", path.display())))?;
            for line in BufReader::new(f).lines() {
                let line = line.map_err(|e| EmbeddingError::Io(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: CacheRow =
                    serde_json::from_str(&line).map_err(|e| EmbeddingError::Io(format!("{}: {e}", path.display())))?;
                entries.insert(row.key, row.vector);
            }
        }
        Ok(EmbeddingCache { entries: RwLock::new(entries), path: Some(path.to_owned()) })
    }

    pub fn key(provider: &str, text: &str) -> String {
        format!("{provider}:{}", sha256_hex(text.as_bytes()))
    }

    pub fn get(&self, key: &str) -> Option<Vec<f64>> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn insert(&self, key: String, v: Vec<f64>) {
        self.entries.write().expect("cache lock").insert(key, v);
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Write the cache back to its file, if it has one.
    pub fn persist(&self) -> Result<(), EmbeddingError> {
        let Some(path) = &self.path else { return Ok(()) };
        let io = |e: std::io::Error| EmbeddingError::Io(format!("{}: {e}", path.display()));
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(std::fs::File::create(&tmp).map_err(io)?);
            for (key, vector) in self.entries.read().expect("cache lock").iter() {
                serde_json::to_writer(&mut w, &CacheRow { key: key.clone(), vector: vector.clone() })
                    .map_err(|e| EmbeddingError::Io(e.to_string()))?;
                w.write_all(b"\n").map_err(io)?;
            }
            w.flush().map_err(io)?;
        }
        std::fs::rename(&tmp, path).map_err(io)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceOptions {
    pub batch_size: usize,
    pub max_inflight: usize,
    pub retry: RetryPolicy,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        ServiceOptions { batch_size: 32, max_inflight: 4, retry: RetryPolicy::default() }
    }
}

/// Remote sentence encoder: POST `{"texts": [...]}`, expect
/// `{"vectors": [[...], ...]}`. Responses are cached by content so repeated
/// audits never diverge.
#[derive(Debug, Clone)]
pub struct ServiceEmbedder {
    client: JsonClient,
    name: String,
    options: ServiceOptions,
    cache: Arc<EmbeddingCache>,
}

impl ServiceEmbedder {
    pub fn new(
        name: impl Into<String>,
        endpoint: Endpoint,
        options: ServiceOptions,
        cache: Arc<EmbeddingCache>,
    ) -> Self {
        ServiceEmbedder { client: JsonClient::new(endpoint), name: name.into(), options, cache }
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    fn fetch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let v = self
            .options
            .retry
            .run(|_| self.client.post(None, &json!({ "texts": texts })), |e| e.is_retryable())
            .map_err(|e| EmbeddingError::ProviderUnavailable(format!("{}: {e}", self.name)))?;
        let rows = v
            .get("vectors")
            .and_then(Value::as_array)
            .ok_or_else(|| EmbeddingError::ProviderUnavailable(format!("{}: response lacks `vectors`", self.name)))?;
        if rows.len() != texts.len() {
            return Err(EmbeddingError::ProviderUnavailable(format!(
                "{}: {} vectors for {} texts",
                self.name,
                rows.len(),
                texts.len()
            )));
        }
        rows.iter()
            .map(|r| {
                r.as_array()
                    .and_then(|xs| xs.iter().map(Value::as_f64).collect::<Option<Vec<f64>>>())
                    .ok_or_else(|| EmbeddingError::ProviderUnavailable(format!("{}: non-numeric vector", self.name)))
            })
            .collect()
    }
}

impl EmbeddingProvider for ServiceEmbedder {
    fn id(&self) -> String {
        format!("service:{}", self.name)
    }

    fn embed(&self, items: &[TextItem]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        let provider = self.id();
        let missing: Vec<&str> = items
            .iter()
            .map(|it| it.text.as_str())
            .filter(|t| self.cache.get(&EmbeddingCache::key(&provider, t)).is_none())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if !missing.is_empty() {
            let batches: Vec<&[&str]> = missing.chunks(self.options.batch_size.max(1)).collect();
            let results = bounded_map(&batches, self.options.max_inflight, |_, b| self.fetch(b), |_| true);
            for (batch, r) in batches.iter().zip(results) {
                let vectors =
                    r.unwrap_or_else(|| Err(EmbeddingError::ProviderUnavailable(format!("{}: aborted", self.name))))?;
                for (t, v) in batch.iter().zip(vectors) {
                    self.cache.insert(EmbeddingCache::key(&provider, t), v);
                }
            }
        }
        items
            .iter()
            .map(|it| {
                let v = self
                    .cache
                    .get(&EmbeddingCache::key(&provider, &it.text))
                    .ok_or_else(|| EmbeddingError::ProviderUnavailable(format!("no vector for `{}`", it.id)))?;
                EmbeddingVector::new(v)
            })
            .collect()
    }
}
