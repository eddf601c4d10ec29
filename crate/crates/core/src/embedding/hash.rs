use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{EmbeddingError, EmbeddingProvider, EmbeddingVector, TextItem};
use crate::par;
use crate::textproc::{tokenize, TokenizerConfig};

/// Deterministic bag-of-words embedder for tests and offline runs.
///
/// Token vector: seed a ChaCha8 generator with `fnv1a64(token) ^ seed`,
/// draw `dim` standard normals, scale to unit length. Text vector: the
/// L2-normalized mean of its token vectors (raw tokenizer, no stop words);
/// a text without tokens maps to the zero vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
}

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashEmbedder { dim, seed }
    }

    pub fn token_vector(&self, token: &str) -> EmbeddingVector {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(token.as_bytes()) ^ self.seed);
        let raw: Vec<f64> = (0..self.dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        EmbeddingVector(raw).normalized()
    }

    pub fn embed_text(&self, text: &str) -> EmbeddingVector {
        let tokens = tokenize(text, &TokenizerConfig::raw());
        if tokens.is_empty() {
            return EmbeddingVector::zeros(self.dim);
        }
        let mut acc = vec![0.0; self.dim];
        for t in &tokens {
            for (a, x) in acc.iter_mut().zip(self.token_vector(t).values()) {
                *a += x;
            }
        }
        let n = tokens.len() as f64;
        EmbeddingVector(acc.into_iter().map(|a| a / n).collect()).normalized()
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn id(&self) -> String {
        format!("hash:dim={}:seed={}", self.dim, self.seed)
    }

    fn embed(&self, items: &[TextItem]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        Ok(par::map(items, |it| self.embed_text(&it.text)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn deterministic_and_order_independent() {
        let a = HashEmbedder::new(32, 7);
        let b = HashEmbedder::new(32, 7);
        let x = a.embed(&[TextItem::new("1", "hello world"), TextItem::new("2", "abc")]).unwrap();
        let y = b.embed(&[TextItem::new("2", "abc"), TextItem::new("1", "hello world")]).unwrap();
        assert_eq!(x[0], y[1]);
        assert_eq!(x[1], y[0]);
        assert!((x[0].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tokenless_text_is_zero() {
        let e = HashEmbedder::new(8, 0);
        assert!(e.embed_text("123 !!").is_zero());
    }

    #[test]
    fn no_collisions_among_many_tokens() {
        let e = HashEmbedder::new(64, 99);
        let mut seen = HashSet::new();
        for i in 0..10_000u32 {
            let tok = format!("tok{i}x");
            let v = e.token_vector(&tok);
            let key: Vec<u64> = v.values().iter().map(|x| x.to_bits()).collect();
            assert!(seen.insert(key), "collision at {tok}");
        }
    }
}
