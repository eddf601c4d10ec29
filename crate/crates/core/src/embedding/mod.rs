//! Embedding providers and cosine geometry.
//!
//! Sentence and story vectors come from an [`EmbeddingProvider`]: a
//! deterministic hash embedder, a precomputed vector file, or an HTTP
//! embedding service. Word vectors for the complexity metric come from a
//! corpus-trained [`WordEmbeddingModel`].

mod hash;
mod service;
mod store;
mod word;

pub use hash::HashEmbedder;
pub use service::{EmbeddingCache, ServiceEmbedder, ServiceOptions};
pub use store::VectorStore;
pub use word::{ppmi_svd, train_word_embeddings, PpmiFactorization, WordEmbeddingModel, WordEmbeddingParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distance reported when either vector has zero norm.
pub const ZERO_VECTOR_DISTANCE: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid vector: {0}")]
    InvalidVector(String),
    #[error("vocabulary of {vocabulary} tokens is smaller than the requested {dim} dimensions")]
    VocabularyTooSmall { vocabulary: usize, dim: usize },
    #[error("{0}")]
    Io(String),
}

/// Fixed-length vector of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::InvalidVector("zero-length vector".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(EmbeddingError::InvalidVector(format!("non-finite component {v}")));
        }
        Ok(EmbeddingVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector(vec![0.0; dim.max(1)])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }

    /// Unit-length copy; zero vectors stay zero.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            self.clone()
        } else {
            EmbeddingVector(self.0.iter().map(|v| v / n).collect())
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        EmbeddingVector(self.0.iter().map(|v| v * k).collect())
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = EmbeddingError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        EmbeddingVector::new(v)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Vec<f64> {
        v.0
    }
}

/// Cosine distance `1 - cos(a, b)`, clamped to `[0, 2]`. A zero-norm input
/// yields [`ZERO_VECTOR_DISTANCE`].
pub fn cosine_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    cosine_distance_flagged(a, b).map(|(d, _)| d)
}

/// As [`cosine_distance`], also reporting whether the zero-vector policy
/// applied.
pub fn cosine_distance_flagged(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<(f64, bool), EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        log::debug!("cosine distance against a zero vector; using {ZERO_VECTOR_DISTANCE}");
        return Ok((ZERO_VECTOR_DISTANCE, true));
    }
    let cos = a.dot(b) / (na * nb);
    Ok(((1.0 - cos).clamp(0.0, 2.0), false))
}

/// A text to embed. `id` addresses precomputed vectors; backends that
/// compute from content ignore it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextItem {
    pub id: String,
    pub text: String,
}

impl TextItem {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        TextItem { id: id.into(), text: text.into() }
    }
}

/// Source of sentence/story embeddings. Implementations must be shareable
/// across metric workers.
pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier recorded in report fingerprints.
    fn id(&self) -> String;
    fn embed(&self, items: &[TextItem]) -> Result<Vec<EmbeddingVector>, EmbeddingError>;
}

/// Embed `items`, checking one vector per input and a single dimension.
pub fn embed_sentences(
    provider: &dyn EmbeddingProvider,
    items: &[TextItem],
) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
    let out = provider.embed(items)?;
    if out.len() != items.len() {
        return Err(EmbeddingError::ProviderUnavailable(format!(
            "{} returned {} vectors for {} inputs",
            provider.id(),
            out.len(),
            items.len()
        )));
    }
    if let Some(first) = out.first() {
        if let Some(bad) = out.iter().find(|v| v.dim() != first.dim()) {
            return Err(EmbeddingError::DimensionMismatch { expected: first.dim(), found: bad.dim() });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn cosine_trivial_cases() {
        assert_eq!(cosine_distance(&v(&[0.3, 0.4]), &v(&[0.3, 0.4])).unwrap(), 0.0);
        assert_eq!(cosine_distance(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 1.0);
        assert_eq!(cosine_distance(&v(&[1.0, 0.0]), &v(&[-1.0, 0.0])).unwrap(), 2.0);
    }

    #[test]
    fn cosine_zero_vector_policy() {
        let (d, flagged) = cosine_distance_flagged(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])).unwrap();
        assert_eq!(d, ZERO_VECTOR_DISTANCE);
        assert!(flagged);
    }

    #[test]
    fn cosine_dimension_mismatch() {
        assert!(matches!(
            cosine_distance(&v(&[1.0]), &v(&[1.0, 0.0])),
            Err(EmbeddingError::DimensionMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(EmbeddingVector::new(vec![f64::NAN]).is_err());
        assert!(EmbeddingVector::new(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_bounded(
            a in prop::collection::vec(-10.0f64..10.0, 4),
            b in prop::collection::vec(-10.0f64..10.0, 4),
        ) {
            let (a, b) = (v(&a), v(&b));
            let ab = cosine_distance(&a, &b).unwrap();
            let ba = cosine_distance(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=2.0).contains(&ab));
            if a.norm() > 1e-6 {
                prop_assert!(cosine_distance(&a, &a).unwrap() < 1e-12);
            }
        }
    }
}
