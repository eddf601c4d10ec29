//! Sentiment polarity in [-1, 1]: a rule-based lexicon scorer and a client
//! for external classifiers, plus group means.

mod external;

pub use external::{ExternalScorer, HttpClassifier, SentimentClassifier, StubClassifier};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{GroupKey, Partition};
use crate::numeric::compensated_sum;
use crate::textproc::{tokenize, TokenizerConfig};

/// Multiplier applied to a valence preceded by a negator.
pub const NEGATION_SCALAR: f64 = -0.74;
/// Normalization constant in `raw / sqrt(raw² + ALPHA)`.
pub const ALPHA: f64 = 15.0;
/// Booster dampening by distance (1, 2, 3 tokens back).
pub const BOOSTER_DAMPING: [f64; 3] = [1.0, 0.95, 0.9];
pub const MAX_VALENCE: f64 = 4.0;
const WINDOW: usize = 3;

const DEFAULT_LEXICON: &str = include_str!("../../data/sentiment_lexicon.tsv");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SentimentError {
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
    #[error("reading lexicon {path}: {message}")]
    LexiconIo { path: String, message: String },
    #[error("sentiment lexicon has no valence entries")]
    EmptyLexicon,
    #[error("sentiment classifier unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("malformed classifier response: {0}")]
    MalformedResponse(String),
    #[error("scored document `{0}` is not in the partition")]
    UnknownDocument(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "name")]
pub enum ScorerKind {
    Lexicon,
    ExternalClassifier(String),
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScorerKind::Lexicon => f.write_str("lexicon"),
            ScorerKind::ExternalClassifier(n) => write!(f, "external:{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentScore {
    pub document_id: String,
    pub polarity: f64,
    pub scorer: ScorerKind,
}

/// Valences, negators and boosters.
///
/// File format, one entry per line (`#` starts a comment):
/// `token<TAB>valence`, `@negator<TAB>token`,
/// `@booster<TAB>token<TAB>multiplier`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SentimentLexicon {
    pub valences: BTreeMap<String, f64>,
    pub negators: BTreeSet<String>,
    pub boosters: BTreeMap<String, f64>,
}

fn norm_token(raw: &str) -> String {
    tokenize(raw, &TokenizerConfig::raw()).join(" ")
}

impl SentimentLexicon {
    pub fn parse(text: &str) -> Result<Self, SentimentError> {
        let mut lex = SentimentLexicon::default();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |m: String| SentimentError::Lexicon { line: line_no, message: m };
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
            let number = |s: &str| {
                s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| err(format!("bad number `{s}`")))
            };
            match fields.as_slice() {
                ["@negator", tok] => {
                    lex.negators.insert(norm_token(tok));
                }
                ["@booster", tok, m] => {
                    lex.boosters.insert(norm_token(tok), number(m)?);
                }
                [d, ..] if d.starts_with('@') => return Err(err(format!("unknown or malformed directive `{d}`"))),
                [tok, v] => {
                    let v = number(v)?;
                    if v.abs() > MAX_VALENCE {
                        return Err(err(format!("valence {v} outside [-{MAX_VALENCE}, {MAX_VALENCE}]")));
                    }
                    let t = norm_token(tok);
                    if t.is_empty() || t.contains(' ') {
                        return Err(err(format!("`{tok}` is not a single token")));
                    }
                    lex.valences.insert(t, v);
                }
                _ => return Err(err("expected `token<TAB>valence` or a directive".into())),
            }
        }
        if lex.valences.is_empty() {
            return Err(SentimentError::EmptyLexicon);
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self, SentimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SentimentError::LexiconIo { path: path.display().to_string(), message: e.to_string() })?;
        SentimentLexicon::parse(&text)
    }

    /// The lexicon shipped with the crate.
    pub fn builtin() -> Self {
        SentimentLexicon::parse(DEFAULT_LEXICON).expect("built-in lexicon parses")
    }

    /// Copy with every valence negated.
    pub fn negated(&self) -> Self {
        SentimentLexicon { valences: self.valences.iter().map(|(k, v)| (k.clone(), -v)).collect(), ..self.clone() }
    }

    /// Unnormalized score of `text`.
    pub fn raw_score(&self, text: &str) -> f64 {
        let tokens = tokenize(text, &TokenizerConfig::raw());
        let mut parts = Vec::new();
        for (i, tok) in tokens.iter().enumerate() {
            let Some(&v) = self.valences.get(tok) else { continue };
            let mut s = v;
            let mut negated = false;
            for k in 1..=WINDOW.min(i) {
                let prev = tokens[i - k].as_str();
                if let Some(b) = self.boosters.get(prev) {
                    s += v.signum() * b * BOOSTER_DAMPING[k - 1];
                }
                negated |= self.negators.contains(prev);
            }
            if negated {
                s *= NEGATION_SCALAR;
            }
            parts.push(s);
        }
        compensated_sum(parts)
    }
}

/// `raw / sqrt(raw² + 15)`.
pub fn normalize(raw: f64) -> f64 {
    raw / (raw * raw + ALPHA).sqrt()
}

pub fn score_lexicon(document_id: &str, text: &str, lexicon: &SentimentLexicon) -> SentimentScore {
    SentimentScore {
        document_id: document_id.to_owned(),
        polarity: normalize(lexicon.raw_score(text)),
        scorer: ScorerKind::Lexicon,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSentiment {
    pub mean: f64,
    /// Documents, or participants when aggregating per participant.
    pub n: usize,
}

/// Mean polarity per group. With `per_participant`, each participant's
/// documents are averaged first and `n` counts participants.
pub fn group_sentiment(
    partition: &Partition<'_>,
    scores: &[SentimentScore],
    per_participant: bool,
) -> Result<BTreeMap<GroupKey, GroupSentiment>, SentimentError> {
    let mut owner: BTreeMap<&str, (&GroupKey, &str)> = BTreeMap::new();
    for (key, docs) in partition {
        for d in docs {
            owner.insert(d.id.as_str(), (key, d.participant_id()));
        }
    }
    let mut buckets: BTreeMap<&GroupKey, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for s in scores {
        let (key, participant) =
            owner.get(s.document_id.as_str()).ok_or_else(|| SentimentError::UnknownDocument(s.document_id.clone()))?;
        let unit = if per_participant { *participant } else { s.document_id.as_str() };
        buckets.entry(key).or_default().entry(unit).or_default().push(s.polarity);
    }
    Ok(buckets
        .into_iter()
        .filter(|(_, units)| !units.is_empty())
        .map(|(key, units)| {
            let means: Vec<f64> =
                units.values().map(|xs| compensated_sum(xs.iter().copied()) / xs.len() as f64).collect();
            let n = means.len();
            (key.clone(), GroupSentiment { mean: compensated_sum(means) / n as f64, n })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{partition, GroupSchema, Race, SourceClass};
    use proptest::prelude::*;

    fn lex() -> SentimentLexicon {
        SentimentLexicon::parse("good\t2\nbad\t-2.5\n@negator\tnot\n@booster\tvery\t0.293\n").unwrap()
    }

    #[test]
    fn spec_examples() {
        assert_eq!(score_lexicon("d", "", &lex()).polarity, 0.0);
        let p = score_lexicon("d", "good good good", &lex()).polarity;
        assert!((p - 6.0 / 51f64.sqrt()).abs() < 1e-15);
        assert!((lex().raw_score("not good") + 1.48).abs() < 1e-15);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(SentimentLexicon::parse("good\t5"), Err(SentimentError::Lexicon { line: 1, .. })));
        assert!(matches!(SentimentLexicon::parse("x\t1\n@boost\ty\t1"), Err(SentimentError::Lexicon { line: 2, .. })));
        assert!(matches!(SentimentLexicon::parse("@negator\tnot"), Err(SentimentError::EmptyLexicon)));
        assert!(matches!(SentimentLexicon::parse("good\tabc"), Err(SentimentError::Lexicon { .. })));
    }

    #[test]
    fn builtin_loads() {
        let l = SentimentLexicon::builtin();
        assert!(l.valences.len() > 150);
        assert!(l.negators.contains("don't"));
        assert!(l.valences.keys().all(|k| !l.boosters.contains_key(k)));
    }

    #[test]
    fn group_means() {
        let docs =
            vec![crate::corpus::tests::doc("a", Race::Asian, None), crate::corpus::tests::doc("b", Race::Asian, None)];
        let part = partition(&docs, &GroupSchema::RACE_SOURCE);
        let s = |id: &str, p: f64| SentimentScore { document_id: id.into(), polarity: p, scorer: ScorerKind::Lexicon };
        let out = group_sentiment(&part, &[s("a", 0.2), s("b", 0.4)], false).unwrap();
        let g = &out[&GroupKey::race_source(Race::Asian, SourceClass::Human)];
        assert!((g.mean - 0.3).abs() < 1e-15);
        assert_eq!(g.n, 2);
        assert!(group_sentiment(&Partition::new(), &[], false).unwrap().is_empty());
        assert_eq!(group_sentiment(&part, &[s("zz", 0.1)], false), Err(SentimentError::UnknownDocument("zz".into())));
    }

    #[test]
    fn per_participant_weights_people_equally() {
        let mut docs = vec![
            crate::corpus::tests::doc("a1", Race::Asian, None),
            crate::corpus::tests::doc("a2", Race::Asian, None),
            crate::corpus::tests::doc("b1", Race::Asian, None),
        ];
        docs[0].participant = Some("p".into());
        docs[1].participant = Some("p".into());
        docs[2].participant = Some("q".into());
        let part = partition(&docs, &GroupSchema::RACE_SOURCE);
        let s = |id: &str, p: f64| SentimentScore { document_id: id.into(), polarity: p, scorer: ScorerKind::Lexicon };
        let out = group_sentiment(&part, &[s("a1", 1.0), s("a2", 0.0), s("b1", 0.0)], true).unwrap();
        let g = out.values().next().unwrap();
        assert_eq!(g.n, 2);
        assert!((g.mean - 0.25).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn bounded_and_antisymmetric(words in prop::collection::vec(prop::sample::select(vec![
            "good", "bad", "not", "very", "the", "happy", "never", "slightly", "terrible", "love", "x",
        ]), 0..40)) {
            let l = SentimentLexicon::builtin();
            let text = words.join(" ");
            let p = score_lexicon("d", &text, &l).polarity;
            prop_assert!((-1.0..=1.0).contains(&p));
            let q = score_lexicon("d", &text, &l.negated()).polarity;
            prop_assert!((p + q).abs() < 1e-12);
        }

        #[test]
        fn normalization_monotone(a in -100.0f64..100.0, d in 0.001f64..10.0) {
            prop_assert!(normalize(a + d) > normalize(a));
        }
    }
}
