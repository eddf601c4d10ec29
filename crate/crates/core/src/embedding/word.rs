//! Count-based word vectors: positive PMI over a symmetric co-occurrence
//! window, factorized by truncated SVD.
//!
//! With `PPMI ≈ U S Vᵀ`, word factors are `U S^½` and context factors
//! `V S^½`; the model's word vector is their sum. For a symmetric PPMI
//! matrix the Gram matrix of the summed vectors equals `2(|M| + M)`, which
//! is independent of how the SVD resolves repeated singular values.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingVector, VectorStore};
use crate::digest::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WordEmbeddingParams {
    /// Tokens at distance `1..=window` on either side co-occur.
    pub window: usize,
    pub dim: usize,
    /// Tokens seen fewer times are left out of the vocabulary.
    pub min_count: u64,
    /// Keep only the most frequent tokens (ties broken lexicographically).
    pub max_vocabulary: usize,
    /// Above this vocabulary size a seeded randomized SVD replaces the
    /// exact decomposition.
    pub exact_svd_limit: usize,
    pub seed: u64,
}

impl Default for WordEmbeddingParams {
    fn default() -> Self {
        WordEmbeddingParams { window: 5, dim: 100, min_count: 1, max_vocabulary: 4000, exact_svd_limit: 1500, seed: 0 }
    }
}

/// Intermediate matrices of a PPMI+SVD fit.
#[derive(Debug, Clone)]
pub struct PpmiFactorization {
    /// Sorted vocabulary; row/column order of every matrix below.
    pub vocabulary: Vec<String>,
    pub cooccurrence: DMatrix<f64>,
    pub ppmi: DMatrix<f64>,
    /// Descending.
    pub singular_values: Vec<f64>,
    pub word_factors: DMatrix<f64>,
    pub context_factors: DMatrix<f64>,
}

/// Word vectors with a shared dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WordEmbeddingModel {
    pub vectors: BTreeMap<String, EmbeddingVector>,
    pub dim: usize,
    /// Fingerprint of the training corpus and parameters (or source file).
    pub trained_on: String,
}

impl WordEmbeddingModel {
    pub fn get(&self, token: &str) -> Option<&EmbeddingVector> {
        self.vectors.get(token)
    }

    /// Wrap externally trained vectors (e.g. skip-gram) loaded from a store.
    pub fn from_store(store: &VectorStore) -> Self {
        let mut ids: Vec<&String> = store.vectors.keys().collect();
        ids.sort();
        let mut h = String::new();
        for id in &ids {
            h.push_str(id);
            h.push('\n');
        }
        WordEmbeddingModel {
            vectors: store.vectors.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            dim: store.dim,
            trained_on: format!("store:{}:{}", store.name, &sha256_hex(h.as_bytes())[..16]),
        }
    }
}

fn build_vocabulary<D: AsRef<[String]>>(docs: &[D], params: &WordEmbeddingParams) -> Vec<String> {
    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    for d in docs {
        for t in d.as_ref() {
            *freq.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = freq.into_iter().filter(|(_, c)| *c >= params.min_count).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(params.max_vocabulary);
    let mut vocab: Vec<String> = ranked.into_iter().map(|(t, _)| t.to_owned()).collect();
    vocab.sort();
    vocab
}

/// Positive PMI of a symmetric count matrix. Rows with no counts stay zero.
pub(crate) fn ppmi_from_counts(counts: &DMatrix<f64>) -> DMatrix<f64> {
    let n = counts.nrows();
    let total: f64 = counts.iter().sum();
    let rows: Vec<f64> = (0..n).map(|i| counts.row(i).sum()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        let c = counts[(i, j)];
        if c <= 0.0 {
            0.0
        } else {
            (c * total / (rows[i] * rows[j])).ln().max(0.0)
        }
    })
}

/// Column-sign convention: the largest-magnitude entry of each left
/// singular vector is positive.
fn canonical_signs(u: &mut DMatrix<f64>, v: &mut DMatrix<f64>) {
    for k in 0..u.ncols() {
        let mut best = 0.0f64;
        for i in 0..u.nrows() {
            if u[(i, k)].abs() > best.abs() {
                best = u[(i, k)];
            }
        }
        if best < 0.0 {
            u.column_mut(k).neg_mut();
            v.column_mut(k).neg_mut();
        }
    }
}

/// Top-`k` singular triplets, descending. Returns (U, s, V) with `k`
/// columns.
fn truncated_svd(m: &DMatrix<f64>, k: usize, params: &WordEmbeddingParams) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let (u, s, v) = if n <= params.exact_svd_limit {
        let svd = m.clone().svd(true, true);
        (svd.u.expect("u requested"), svd.singular_values, svd.v_t.expect("v requested").transpose())
    } else {
        randomized_svd(m, k, params.seed)
    };
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    order.truncate(k);
    let mut uk = DMatrix::from_fn(n, k, |i, c| u[(i, order[c])]);
    let mut vk = DMatrix::from_fn(n, k, |i, c| v[(i, order[c])]);
    canonical_signs(&mut uk, &mut vk);
    let sk = order.iter().map(|&i| s[i]).collect();
    (uk, sk, vk)
}

/// Halko–Martinsson–Tropp range finder with two power iterations.
fn randomized_svd(m: &DMatrix<f64>, k: usize, seed: u64) -> (DMatrix<f64>, nalgebra::DVector<f64>, DMatrix<f64>) {
    let n = m.ncols();
    let l = (k + 10).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DMatrix::from_fn(n, l, |_, _| StandardNormal.sample(&mut rng));
    let mut q = (m * omega).qr().q();
    for _ in 0..2 {
        q = (m.transpose() * &q).qr().q();
        q = (m * &q).qr().q();
    }
    let b = q.transpose() * m;
    let svd = b.svd(true, true);
    let u = &q * svd.u.expect("u requested");
    (u, svd.singular_values, svd.v_t.expect("v requested").transpose())
}

/// Full PPMI+SVD fit, exposing the intermediate matrices.
pub fn ppmi_svd<D: AsRef<[String]>>(
    docs: &[D],
    params: &WordEmbeddingParams,
) -> Result<PpmiFactorization, EmbeddingError> {
    if params.window == 0 || params.dim == 0 {
        return Err(EmbeddingError::InvalidVector("window and dim must be at least 1".into()));
    }
    let vocabulary = build_vocabulary(docs, params);
    if vocabulary.len() < params.dim {
        return Err(EmbeddingError::VocabularyTooSmall { vocabulary: vocabulary.len(), dim: params.dim });
    }
    let index: BTreeMap<&str, usize> = vocabulary.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let n = vocabulary.len();
    let mut counts = DMatrix::<f64>::zeros(n, n);
    for d in docs {
        let ids: Vec<Option<usize>> = d.as_ref().iter().map(|t| index.get(t.as_str()).copied()).collect();
        for (i, a) in ids.iter().enumerate() {
            let Some(a) = a else { continue };
            for b in ids.iter().skip(i + 1).take(params.window).flatten() {
                counts[(*a, *b)] += 1.0;
                counts[(*b, *a)] += 1.0;
            }
        }
    }
    let ppmi = ppmi_from_counts(&counts);
    let (u, s, v) = truncated_svd(&ppmi, params.dim, params);
    let scale: Vec<f64> = s.iter().map(|x| x.max(0.0).sqrt()).collect();
    let word_factors = DMatrix::from_fn(n, params.dim, |i, c| u[(i, c)] * scale[c]);
    let context_factors = DMatrix::from_fn(n, params.dim, |i, c| v[(i, c)] * scale[c]);
    Ok(PpmiFactorization { vocabulary, cooccurrence: counts, ppmi, singular_values: s, word_factors, context_factors })
}

/// Train word vectors on tokenized documents.
pub fn train_word_embeddings<D: AsRef<[String]>>(
    docs: &[D],
    params: &WordEmbeddingParams,
) -> Result<WordEmbeddingModel, EmbeddingError> {
    let fit = ppmi_svd(docs, params)?;
    let mut fp = format!(
        "ppmi-svd:w={}:d={}:min={}:max={}\n",
        params.window, params.dim, params.min_count, params.max_vocabulary
    );
    for d in docs {
        fp.push_str(&d.as_ref().join(" "));
        fp.push('\n');
    }
    let mut vectors = BTreeMap::new();
    for (i, tok) in fit.vocabulary.iter().enumerate() {
        let zero_row = fit.ppmi.row(i).iter().all(|x| *x == 0.0);
        let values: Vec<f64> = if zero_row {
            vec![0.0; params.dim]
        } else {
            (0..params.dim).map(|c| fit.word_factors[(i, c)] + fit.context_factors[(i, c)]).collect()
        };
        vectors.insert(tok.clone(), EmbeddingVector::new(values)?);
    }
    Ok(WordEmbeddingModel { vectors, dim: params.dim, trained_on: sha256_hex(fp.as_bytes())[..16].to_owned() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(lines: &[&str]) -> Vec<Vec<String>> {
        lines.iter().map(|l| l.split_whitespace().map(str::to_owned).collect()).collect()
    }

    #[test]
    fn vocabulary_too_small() {
        let p = WordEmbeddingParams { dim: 5, ..Default::default() };
        assert!(matches!(
            train_word_embeddings(&docs(&["a b c"]), &p),
            Err(EmbeddingError::VocabularyTooSmall { vocabulary: 3, dim: 5 })
        ));
    }

    #[test]
    fn isolated_token_gets_zero_vector() {
        let p = WordEmbeddingParams { window: 2, dim: 2, ..Default::default() };
        let m = train_word_embeddings(&docs(&["a b c", "lonely"]), &p).unwrap();
        assert!(m.get("lonely").unwrap().is_zero());
        assert!(!m.get("a").unwrap().is_zero());
    }

    #[test]
    fn deterministic() {
        let p = WordEmbeddingParams { window: 2, dim: 3, ..Default::default() };
        let d = docs(&["the cat sat on the mat", "the dog sat on the log"]);
        assert_eq!(train_word_embeddings(&d, &p).unwrap(), train_word_embeddings(&d, &p).unwrap());
    }

    #[test]
    fn randomized_matches_exact_on_low_rank() {
        let d = docs(&["a b c d e f g h", "a b c d", "e f g h a", "c d e"]);
        let exact = WordEmbeddingParams { window: 3, dim: 3, ..Default::default() };
        let rand = WordEmbeddingParams { exact_svd_limit: 0, ..exact };
        let a = ppmi_svd(&d, &exact).unwrap();
        let b = ppmi_svd(&d, &rand).unwrap();
        for (x, y) in a.singular_values.iter().zip(&b.singular_values) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }

    fn brute_ppmi(d: &[Vec<String>], vocab: &[String], window: usize) -> DMatrix<f64> {
        let n = vocab.len();
        let mut c = DMatrix::<f64>::zeros(n, n);
        let idx = |t: &str| vocab.iter().position(|v| v == t).unwrap();
        for doc in d {
            for i in 0..doc.len() {
                for j in 0..doc.len() {
                    if i != j && i.abs_diff(j) <= window {
                        c[(idx(&doc[i]), idx(&doc[j]))] += 1.0;
                    }
                }
            }
        }
        let total: f64 = c.iter().sum();
        DMatrix::from_fn(n, n, |i, j| {
            let pij = c[(i, j)] / total;
            let pi = c.row(i).sum() / total;
            let pj = c.column(j).sum() / total;
            if pij == 0.0 {
                0.0
            } else {
                (pij / (pi * pj)).ln().max(0.0)
            }
        })
    }

    #[test]
    fn full_rank_fit_reconstructs_ppmi_and_gram() {
        let d = docs(&["the cat sat on the mat", "a dog sat on a log", "the dog and the cat"]);
        let vocab_n = build_vocabulary(&d, &WordEmbeddingParams::default()).len();
        let p = WordEmbeddingParams { window: 2, dim: vocab_n, ..Default::default() };
        let fit = ppmi_svd(&d, &p).unwrap();
        let oracle = brute_ppmi(&d, &fit.vocabulary, 2);
        assert!((&fit.ppmi - &oracle).abs().max() < 1e-12);
        let recon = &fit.word_factors * fit.context_factors.transpose();
        assert!((&recon - &fit.ppmi).abs().max() < 1e-9);
        // (W + C)(W + C)^T = 2(|M| + M) for symmetric M.
        let eig = oracle.clone().symmetric_eigen();
        let abs_m =
            &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::abs)) * eig.eigenvectors.transpose();
        let sum = &fit.word_factors + &fit.context_factors;
        let gram = &sum * sum.transpose();
        assert!((&gram - (abs_m + &oracle) * 2.0).abs().max() < 1e-8);
    }
}
