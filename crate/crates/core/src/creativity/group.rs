use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    complexity_from, diversity, mean_distances, novelty_from, surprisal, w2v_spread, ComplexityScore, CorpusMaxima,
    CreativityError, StoryEmbedding, SurprisalScore,
};
use crate::corpus::{GroupKey, Partition, PersonaDocument, QuestionId, SourceClass};
use crate::embedding::{embed_sentences, EmbeddingProvider, TextItem, WordEmbeddingModel};
use crate::numeric::compensated_sum;
use crate::par;
use crate::textproc::{split_sentences, tokenize, TokenizerConfig};

/// Which stories form the novelty baseline `d_corpus`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoveltyScope {
    /// Stories of the same source class (human or model).
    #[default]
    PerSource,
    /// Every story in the audit.
    Global,
}

/// How combined rows (e.g. all model groups) are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Weight member groups by their story counts.
    #[default]
    Micro,
    /// Average the member groups' metric values.
    Macro,
}

/// Whether distances are taken only between answers to the same question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionScope {
    /// All answers of a group together.
    #[default]
    Pooled,
    /// Within each question; group values are story-weighted means over
    /// questions.
    PerQuestion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CreativityOptions {
    pub novelty_scope: NoveltyScope,
    pub aggregation: AggregationMode,
    pub question_scope: QuestionScope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CreativityFlags {
    pub single_sentence_stories: usize,
    pub stories_without_word_pairs: usize,
    pub degenerate_corpus: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreativityScores {
    pub group: GroupKey,
    pub n: usize,
    pub diversity: f64,
    pub novelty: f64,
    /// `d_corpus`, the baseline diversity novelty is measured against.
    pub corpus_distance: f64,
    pub complexity_mean: f64,
    pub surprisal_mean: f64,
    pub aggregation: AggregationMode,
    pub flags: CreativityFlags,
}

/// Story-level samples behind a group's scores, aligned with
/// `document_ids`. `diversity[i]` is story i's mean distance to the rest of
/// its group and `novelty[i] = 2 (diversity[i] - d_corpus)`, so their means
/// recover the group diversity and signed novelty.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupSamples {
    pub document_ids: Vec<String>,
    pub diversity: Vec<f64>,
    pub novelty: Vec<f64>,
    pub complexity: Vec<f64>,
    pub surprisal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCreativity {
    pub scores: CreativityScores,
    pub samples: GroupSamples,
}

/// A document with its embeddings and lexical rarity.
#[derive(Debug, Clone, Copy)]
pub struct StoryInput<'a> {
    pub doc: &'a PersonaDocument,
    pub story: &'a StoryEmbedding,
    /// Mean TF-IDF over the story's distinct tokens.
    pub tfidf_avg: f64,
}

/// Embed every document: one vector for the whole text, one per sentence,
/// and word vectors for its distinct tokens. Sentence items use the id
/// `<doc id>#s<k>` (k from 0) for providers that look vectors up by id.
pub fn embed_stories(
    docs: &[&PersonaDocument],
    provider: &dyn EmbeddingProvider,
    words: &WordEmbeddingModel,
    tokenizer: &TokenizerConfig,
) -> Result<BTreeMap<String, StoryEmbedding>, CreativityError> {
    let sentences: Vec<Vec<String>> = par::map(docs, |d| split_sentences(&d.text));
    let mut items = Vec::new();
    for (d, ss) in docs.iter().zip(&sentences) {
        items.push(TextItem::new(d.id.clone(), d.text.clone()));
        for (k, s) in ss.iter().enumerate() {
            items.push(TextItem::new(format!("{}#s{k}", d.id), s.clone()));
        }
    }
    let mut vectors = embed_sentences(provider, &items)?.into_iter();
    let token_vectors = par::map(docs, |d| {
        let distinct: BTreeSet<String> = tokenize(&d.text, tokenizer).into_iter().collect();
        distinct.iter().filter_map(|t| words.get(t).filter(|v| !v.is_zero()).cloned()).collect::<Vec<_>>()
    });
    let mut out = BTreeMap::new();
    for ((d, ss), toks) in docs.iter().zip(&sentences).zip(token_vectors) {
        let story_vector = vectors.next().expect("one vector per item");
        let sentence_vectors = vectors.by_ref().take(ss.len()).collect();
        out.insert(
            d.id.clone(),
            StoryEmbedding { document_id: d.id.clone(), sentence_vectors, story_vector, token_vectors: toks },
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct PoolKey {
    source: Option<SourceClass>,
    question: Option<QuestionId>,
}

fn pool_key(doc: &PersonaDocument, options: &CreativityOptions) -> PoolKey {
    PoolKey {
        source: match options.novelty_scope {
            NoveltyScope::PerSource => Some(doc.source.class()),
            NoveltyScope::Global => None,
        },
        question: match options.question_scope {
            QuestionScope::PerQuestion => Some(doc.question),
            QuestionScope::Pooled => None,
        },
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        compensated_sum(xs.iter().copied()) / xs.len() as f64
    }
}

struct StoryLevel {
    complexity: ComplexityScore,
    surprisal: SurprisalScore,
}

/// Scores for every group of `partition`. A group that cannot be scored
/// (fewer than two stories, missing embedding) reports its own error and
/// does not affect the others.
pub fn group_creativity(
    partition: &Partition<'_>,
    stories: &BTreeMap<String, StoryEmbedding>,
    tfidf_avg: &BTreeMap<String, f64>,
    options: &CreativityOptions,
) -> BTreeMap<GroupKey, Result<GroupCreativity, CreativityError>> {
    let all: Vec<&PersonaDocument> = partition.values().flatten().copied().collect();
    let inputs: Vec<Option<StoryInput<'_>>> = all
        .iter()
        .map(|d| {
            stories.get(&d.id).map(|s| StoryInput {
                doc: d,
                story: s,
                tfidf_avg: tfidf_avg.get(&d.id).copied().unwrap_or(0.0),
            })
        })
        .collect();

    // Corpus maxima over every scored story.
    let spreads: Vec<(f64, bool)> =
        par::map(&inputs, |i| i.map(|i| w2v_spread(&i.story.token_vectors)).unwrap_or((0.0, true)));
    let maxima = CorpusMaxima {
        max_tfidf: inputs.iter().flatten().map(|i| i.tfidf_avg).fold(0.0, f64::max),
        max_w2v: spreads.iter().map(|s| s.0).fold(0.0, f64::max),
    };
    let mut level: BTreeMap<&str, StoryLevel> = BTreeMap::new();
    for (input, (spread, no_pairs)) in inputs.iter().zip(&spreads) {
        if let Some(i) = input {
            level.insert(
                i.doc.id.as_str(),
                StoryLevel {
                    complexity: complexity_from(i.tfidf_avg, *spread, *no_pairs, maxima),
                    surprisal: surprisal(i.story),
                },
            );
        }
    }

    // Baseline diversity per pool.
    let mut pools: BTreeMap<PoolKey, Vec<&StoryEmbedding>> = BTreeMap::new();
    for i in inputs.iter().flatten() {
        pools.entry(pool_key(i.doc, options)).or_default().push(i.story);
    }
    let pool_keys: Vec<PoolKey> = pools.keys().copied().collect();
    let baselines: BTreeMap<PoolKey, Result<f64, CreativityError>> = pool_keys
        .iter()
        .map(|k| {
            let vs: Vec<_> = pools[k].iter().map(|s| s.story_vector.clone()).collect();
            (*k, diversity(&vs))
        })
        .collect();

    partition
        .iter()
        .map(|(key, docs)| {
            let r = score_group(key, docs, stories, &level, &baselines, options, maxima);
            (key.clone(), r)
        })
        .collect()
}

fn score_group(
    key: &GroupKey,
    docs: &[&PersonaDocument],
    stories: &BTreeMap<String, StoryEmbedding>,
    level: &BTreeMap<&str, StoryLevel>,
    baselines: &BTreeMap<PoolKey, Result<f64, CreativityError>>,
    options: &CreativityOptions,
    maxima: CorpusMaxima,
) -> Result<GroupCreativity, CreativityError> {
    if docs.len() < 2 {
        return Err(CreativityError::GroupTooSmall { n: docs.len() });
    }
    for d in docs {
        if !stories.contains_key(&d.id) {
            return Err(CreativityError::MissingStory(d.id.clone()));
        }
    }
    // Subsets over which distances are taken.
    let mut subsets: BTreeMap<Option<QuestionId>, Vec<&PersonaDocument>> = BTreeMap::new();
    for d in docs {
        let q = (options.question_scope == QuestionScope::PerQuestion).then_some(d.question);
        subsets.entry(q).or_default().push(d);
    }
    let n = docs.len();
    let mut ids = Vec::with_capacity(n);
    let mut contrib = Vec::with_capacity(n);
    let mut novelty_contrib = Vec::with_capacity(n);
    let mut weighted_div = Vec::new();
    let mut weighted_base = Vec::new();
    let mut pool_sizes: BTreeMap<PoolKey, usize> = BTreeMap::new();
    for members in subsets.values() {
        let vs: Vec<_> = members.iter().map(|d| stories[&d.id].story_vector.clone()).collect();
        let d_sub = diversity(&vs)?;
        let r = mean_distances(&vs)?;
        weighted_div.push(d_sub * members.len() as f64);
        for (d, ri) in members.iter().zip(r) {
            let pk = pool_key(d, options);
            let base = baselines[&pk].clone()?;
            *pool_sizes.entry(pk).or_insert(0) += 1;
            weighted_base.push(base);
            ids.push(d.id.clone());
            contrib.push(ri);
            novelty_contrib.push(2.0 * (ri - base));
        }
    }
    let d_group = if subsets.len() == 1 {
        diversity(&docs.iter().map(|d| stories[&d.id].story_vector.clone()).collect::<Vec<_>>())?
    } else {
        compensated_sum(weighted_div) / n as f64
    };
    let d_corpus = if pool_sizes.len() == 1 {
        baselines[pool_sizes.keys().next().expect("one pool")].clone()?
    } else {
        mean(&weighted_base)
    };

    let complexity: Vec<f64> = ids.iter().map(|id| level[id.as_str()].complexity.value).collect();
    let surprisal: Vec<f64> = ids.iter().map(|id| level[id.as_str()].surprisal.value).collect();
    let flags = CreativityFlags {
        single_sentence_stories: ids.iter().filter(|id| level[id.as_str()].surprisal.single_sentence).count(),
        stories_without_word_pairs: ids.iter().filter(|id| level[id.as_str()].complexity.no_word_pairs).count(),
        degenerate_corpus: maxima.max_tfidf <= 0.0 || maxima.max_w2v <= 0.0,
    };
    Ok(GroupCreativity {
        scores: CreativityScores {
            group: key.clone(),
            n,
            diversity: d_group,
            novelty: novelty_from(d_group, d_corpus),
            corpus_distance: d_corpus,
            complexity_mean: mean(&complexity),
            surprisal_mean: mean(&surprisal),
            aggregation: AggregationMode::Micro,
            flags,
        },
        samples: GroupSamples {
            document_ids: ids,
            diversity: contrib,
            novelty: novelty_contrib,
            complexity,
            surprisal,
        },
    })
}

/// Combine scored groups into one row. Samples are concatenated.
///
/// `Macro` takes the unweighted mean of each member's metric values.
/// `Micro` weights members by story count: diversity and the two story
/// means are means over the concatenated story samples, and novelty is
/// `|mean|` of the concatenated novelty contributions. Distances stay
/// within the member groups, so pooling every group of a source does not
/// collapse novelty onto its own baseline.
pub fn aggregate(label: GroupKey, members: &[&GroupCreativity], mode: AggregationMode) -> Option<GroupCreativity> {
    if members.is_empty() {
        return None;
    }
    let mut samples = GroupSamples::default();
    let mut flags = CreativityFlags::default();
    for m in members {
        samples.document_ids.extend(m.samples.document_ids.iter().cloned());
        samples.diversity.extend(&m.samples.diversity);
        samples.novelty.extend(&m.samples.novelty);
        samples.complexity.extend(&m.samples.complexity);
        samples.surprisal.extend(&m.samples.surprisal);
        flags.single_sentence_stories += m.scores.flags.single_sentence_stories;
        flags.stories_without_word_pairs += m.scores.flags.stories_without_word_pairs;
        flags.degenerate_corpus |= m.scores.flags.degenerate_corpus;
    }
    let avg = |f: fn(&CreativityScores) -> f64| mean(&members.iter().map(|m| f(&m.scores)).collect::<Vec<_>>());
    let weighted = |f: fn(&CreativityScores) -> f64| {
        let n: usize = members.iter().map(|m| m.scores.n).sum();
        compensated_sum(members.iter().map(|m| f(&m.scores) * m.scores.n as f64)) / n as f64
    };
    let scores = match mode {
        AggregationMode::Macro => CreativityScores {
            group: label,
            n: members.iter().map(|m| m.scores.n).sum(),
            diversity: avg(|s| s.diversity),
            novelty: avg(|s| s.novelty),
            corpus_distance: avg(|s| s.corpus_distance),
            complexity_mean: avg(|s| s.complexity_mean),
            surprisal_mean: avg(|s| s.surprisal_mean),
            aggregation: mode,
            flags,
        },
        AggregationMode::Micro => CreativityScores {
            group: label,
            n: samples.document_ids.len(),
            diversity: mean(&samples.diversity),
            novelty: mean(&samples.novelty).abs(),
            corpus_distance: weighted(|s| s.corpus_distance),
            complexity_mean: mean(&samples.complexity),
            surprisal_mean: mean(&samples.surprisal),
            aggregation: mode,
            flags,
        },
    };
    Some(GroupCreativity { scores, samples })
}
