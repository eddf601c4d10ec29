//! Creativity metrics over story embeddings: semantic diversity, novelty,
//! complexity and surprisal.

mod group;

pub use group::{
    aggregate, embed_stories, group_creativity, AggregationMode, CreativityFlags, CreativityOptions, CreativityScores,
    GroupCreativity, GroupSamples, NoveltyScope, QuestionScope, StoryInput,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbeddingError, EmbeddingVector};
use crate::numeric::compensated_sum;
use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CreativityError {
    #[error("need at least 2 stories, got {n}")]
    GroupTooSmall { n: usize },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("no story embedding for document `{0}`")]
    MissingStory(String),
}

/// Embeddings of one story.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryEmbedding {
    pub document_id: String,
    /// One vector per sentence, in order.
    pub sentence_vectors: Vec<EmbeddingVector>,
    /// Encoder vector of the whole response.
    pub story_vector: EmbeddingVector,
    /// Word vectors of the story's distinct tokens that have a non-zero
    /// vector in the word model.
    pub token_vectors: Vec<EmbeddingVector>,
}

/// Cosine distance on pre-computed norms. Zero vectors get distance 1.
#[inline]
fn dist(a: &EmbeddingVector, na: f64, b: &EmbeddingVector, nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return crate::embedding::ZERO_VECTOR_DISTANCE;
    }
    (1.0 - a.dot(b) / (na * nb)).clamp(0.0, 2.0)
}

fn check_dims(vectors: &[EmbeddingVector]) -> Result<(), CreativityError> {
    if let Some(first) = vectors.first() {
        if let Some(bad) = vectors.iter().find(|v| v.dim() != first.dim()) {
            return Err(EmbeddingError::DimensionMismatch { expected: first.dim(), found: bad.dim() }.into());
        }
    }
    Ok(())
}

/// Mean pairwise cosine distance, in `[0, 2]`.
pub fn diversity(vectors: &[EmbeddingVector]) -> Result<f64, CreativityError> {
    let n = vectors.len();
    if n < 2 {
        return Err(CreativityError::GroupTooSmall { n });
    }
    check_dims(vectors)?;
    let norms: Vec<f64> = vectors.iter().map(EmbeddingVector::norm).collect();
    let upper =
        par::map_range(n, |i| compensated_sum((i + 1..n).map(|j| dist(&vectors[i], norms[i], &vectors[j], norms[j]))));
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(compensated_sum(upper) / pairs)
}

/// Each story's mean distance to the other stories of its set. The mean of
/// these equals [`diversity`] of the set.
pub fn mean_distances(vectors: &[EmbeddingVector]) -> Result<Vec<f64>, CreativityError> {
    let n = vectors.len();
    if n < 2 {
        return Err(CreativityError::GroupTooSmall { n });
    }
    check_dims(vectors)?;
    let norms: Vec<f64> = vectors.iter().map(EmbeddingVector::norm).collect();
    Ok(par::map_range(n, |i| {
        compensated_sum((0..n).filter(|&j| j != i).map(|j| dist(&vectors[i], norms[i], &vectors[j], norms[j])))
            / (n - 1) as f64
    }))
}

/// `2 |d_group - d_corpus|`.
pub fn novelty(group: &[EmbeddingVector], corpus: &[EmbeddingVector]) -> Result<f64, CreativityError> {
    Ok(novelty_from(diversity(group)?, diversity(corpus)?))
}

pub fn novelty_from(d_group: f64, d_corpus: f64) -> f64 {
    2.0 * (d_group - d_corpus).abs()
}

/// Word-vector spread of a story: mean pairwise cosine distance of its
/// token vectors. Fewer than two vectors gives 0 and `true`.
pub fn w2v_spread(token_vectors: &[EmbeddingVector]) -> (f64, bool) {
    match diversity(token_vectors) {
        Ok(d) => (d, false),
        Err(_) => (0.0, true),
    }
}

/// Corpus maxima used to normalize the two complexity terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusMaxima {
    pub max_tfidf: f64,
    pub max_w2v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplexityScore {
    pub value: f64,
    pub tfidf_term: f64,
    pub w2v_term: f64,
    /// Fewer than two usable word vectors.
    pub no_word_pairs: bool,
    /// A corpus maximum was 0 and its term was set to 0.
    pub degenerate_corpus: bool,
}

/// `0.5 · tfidf_avg / max_tfidf + 0.5 · w2v_spread / max_w2v`.
pub fn complexity(story: &StoryEmbedding, tfidf_avg: f64, maxima: CorpusMaxima) -> ComplexityScore {
    let (spread, no_word_pairs) = w2v_spread(&story.token_vectors);
    complexity_from(tfidf_avg, spread, no_word_pairs, maxima)
}

pub(crate) fn complexity_from(
    tfidf_avg: f64,
    spread: f64,
    no_word_pairs: bool,
    maxima: CorpusMaxima,
) -> ComplexityScore {
    let mut degenerate = false;
    let mut term = |x: f64, max: f64| {
        if max > 0.0 {
            (x / max).clamp(0.0, 1.0)
        } else {
            degenerate = true;
            0.0
        }
    };
    let tfidf_term = term(tfidf_avg, maxima.max_tfidf);
    let w2v_term = term(spread, maxima.max_w2v);
    ComplexityScore {
        value: 0.5 * tfidf_term + 0.5 * w2v_term,
        tfidf_term,
        w2v_term,
        no_word_pairs,
        degenerate_corpus: degenerate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SurprisalScore {
    pub value: f64,
    /// Fewer than two sentences; value is 0 by convention.
    pub single_sentence: bool,
}

/// `(2 / (n - 1)) · Σ_{i=2..n} (1 - cos(e_{i-1}, e_i))`, in `[0, 4]`.
pub fn surprisal(story: &StoryEmbedding) -> SurprisalScore {
    let v = &story.sentence_vectors;
    let n = v.len();
    if n < 2 {
        return SurprisalScore { value: 0.0, single_sentence: true };
    }
    let norms: Vec<f64> = v.iter().map(EmbeddingVector::norm).collect();
    let sum = compensated_sum((1..n).map(|i| dist(&v[i - 1], norms[i - 1], &v[i], norms[i])));
    SurprisalScore { value: 2.0 / (n - 1) as f64 * sum, single_sentence: false }
}
