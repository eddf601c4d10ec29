use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use serde_json::{json, Value};

use super::{ScorerKind, SentimentError, SentimentScore};
use crate::net::{bounded_map, Endpoint, HttpError, JsonClient, RetryPolicy};

/// A model that maps texts to polarities, one per text, in input order.
pub trait SentimentClassifier: Send + Sync {
    fn name(&self) -> String;
    fn classify(&self, texts: &[&str]) -> Result<Vec<f64>, SentimentError>;
}

/// Offline classifier: a per-text table with a fallback value. Counts the
/// batches it is asked to classify.
#[derive(Debug, Default)]
pub struct StubClassifier {
    pub table: HashMap<String, f64>,
    pub fallback: f64,
    calls: AtomicUsize,
}

impl StubClassifier {
    pub fn constant(value: f64) -> Self {
        StubClassifier { fallback: value, ..StubClassifier::default() }
    }

    pub fn with_table(table: HashMap<String, f64>, fallback: f64) -> Self {
        StubClassifier { table, fallback, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl SentimentClassifier for StubClassifier {
    fn name(&self) -> String {
        "stub".to_owned()
    }

    fn classify(&self, texts: &[&str]) -> Result<Vec<f64>, SentimentError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(texts.iter().map(|t| *self.table.get(*t).unwrap_or(&self.fallback)).collect())
    }
}

/// POST `{"texts": [...]}`, expect `{"scores": [...]}`.
#[derive(Debug, Clone)]
pub struct HttpClassifier {
    client: JsonClient,
    name: String,
    retry: RetryPolicy,
}

impl HttpClassifier {
    pub fn new(name: impl Into<String>, endpoint: Endpoint, retry: RetryPolicy) -> Self {
        HttpClassifier { client: JsonClient::new(endpoint), name: name.into(), retry }
    }
}

impl SentimentClassifier for HttpClassifier {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn classify(&self, texts: &[&str]) -> Result<Vec<f64>, SentimentError> {
        let v = self
            .retry
            .run(|_| self.client.post(None, &json!({ "texts": texts })), HttpError::is_retryable)
            .map_err(|e| match e {
                HttpError::Fatal(m) if m.contains("not JSON") => SentimentError::MalformedResponse(m),
                other => SentimentError::ProviderUnavailable(format!("{}: {other}", self.name)),
            })?;
        let scores = v
            .get("scores")
            .and_then(Value::as_array)
            .ok_or_else(|| SentimentError::MalformedResponse(format!("{}: response lacks `scores`", self.name)))?;
        if scores.len() != texts.len() {
            return Err(SentimentError::MalformedResponse(format!(
                "{}: {} scores for {} texts",
                self.name,
                scores.len(),
                texts.len()
            )));
        }
        scores
            .iter()
            .map(|s| {
                s.as_f64()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| SentimentError::MalformedResponse(format!("{}: non-numeric score {s}", self.name)))
            })
            .collect()
    }
}

/// Batches, deduplicates, clamps and caches calls to a classifier. Cached
/// values are the clamped ones, so a text scores identically for the
/// lifetime of the scorer.
pub struct ExternalScorer {
    classifier: Arc<dyn SentimentClassifier>,
    cache: RwLock<BTreeMap<String, f64>>,
    pub batch_size: usize,
    pub max_inflight: usize,
}

impl ExternalScorer {
    pub fn new(classifier: Arc<dyn SentimentClassifier>) -> Self {
        ExternalScorer { classifier, cache: RwLock::default(), batch_size: 32, max_inflight: 4 }
    }

    pub fn name(&self) -> String {
        self.classifier.name()
    }

    pub fn cached(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }

    /// Score `(document id, text)` pairs.
    pub fn score(&self, items: &[(&str, &str)]) -> Result<Vec<SentimentScore>, SentimentError> {
        let missing: Vec<&str> = {
            let cache = self.cache.read().expect("cache lock");
            items
                .iter()
                .map(|(_, t)| *t)
                .filter(|t| !cache.contains_key(*t))
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        };
        if !missing.is_empty() {
            let batches: Vec<&[&str]> = missing.chunks(self.batch_size.max(1)).collect();
            let results = bounded_map(&batches, self.max_inflight, |_, b| self.classifier.classify(b), |_| true);
            let name = self.name();
            for (batch, r) in batches.iter().zip(results) {
                let scores =
                    r.unwrap_or_else(|| Err(SentimentError::ProviderUnavailable(format!("{name}: aborted"))))?;
                if scores.len() != batch.len() {
                    return Err(SentimentError::MalformedResponse(format!(
                        "{name}: {} scores for {} texts",
                        scores.len(),
                        batch.len()
                    )));
                }
                let mut cache = self.cache.write().expect("cache lock");
                for (t, s) in batch.iter().zip(scores) {
                    let clamped = s.clamp(-1.0, 1.0);
                    if clamped != s {
                        log::warn!("{name} returned polarity {s}; clamped to {clamped}");
                    }
                    cache.entry((*t).to_owned()).or_insert(clamped);
                }
            }
        }
        let cache = self.cache.read().expect("cache lock");
        let kind = ScorerKind::ExternalClassifier(self.name());
        Ok(items
            .iter()
            .map(|(id, t)| SentimentScore { document_id: (*id).to_owned(), polarity: cache[*t], scorer: kind.clone() })
            .collect())
    }
}
