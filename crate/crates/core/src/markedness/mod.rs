//! Smoothed log-odds markedness with an informative Dirichlet prior.
//!
//! For token `w` with counts `c1`, `c2` in the two corpora (totals `N1`,
//! `N2`) and prior count `p` (prior total `P`):
//!
//! ```text
//! δ = [ln((c1+p)/(N1−c1+P−p)) − ln((c2+p)/(N2−c2+P−p))] / sqrt(1/(c1+p) + 1/(c2+p))
//! ```
//!
//! The variance uses only the two in-group terms. Some formulations also
//! add the complement terms `1/(N−c+P−p)`; this one does not.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{GroupKey, Partition, PersonaDocument};
use crate::par;
use crate::textproc::{count_stats, tokenize, TokenStats, TokenizerConfig};

pub const DEFAULT_Z_THRESHOLD: f64 = 1.96;

#[derive(Debug, Error, PartialEq)]
pub enum MarkednessError {
    #[error("token `{token}` has no prior mass")]
    PriorGap { token: String },
    #[error("non-positive complement count for `{token}` (N - c + P - p <= 0)")]
    DegenerateDenominator { token: String },
    #[error("{which} total {total} is smaller than its summed counts {sum}")]
    InconsistentTotals { which: &'static str, total: u64, sum: u64 },
    #[error("group `{0}` has no documents")]
    EmptyGroup(String),
    #[error("invalid log-odds configuration: {0}")]
    InvalidConfig(String),
    #[error("reading tag lexicon {path}: {message}")]
    TagLexicon { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogOddsConfig {
    /// Multiplier σ on the prior counts (and prior total).
    pub prior_scale: f64,
    pub z_threshold: f64,
}

impl Default for LogOddsConfig {
    fn default() -> Self {
        LogOddsConfig { prior_scale: 1.0, z_threshold: DEFAULT_Z_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogOddsResult {
    pub token: String,
    pub delta: f64,
    pub z_threshold: f64,
    pub significant: bool,
    pub c1: u64,
    pub c2: u64,
    /// Raw prior count, before scaling.
    pub prior: u64,
}

fn check_totals(which: &'static str, s: &TokenStats) -> Result<(), MarkednessError> {
    let sum: u64 = s.counts.values().sum();
    if s.total < sum {
        return Err(MarkednessError::InconsistentTotals { which, total: s.total, sum });
    }
    Ok(())
}

/// Descending δ, ties broken by token.
fn rank(results: &mut [LogOddsResult]) {
    results.sort_by(|a, b| b.delta.total_cmp(&a.delta).then_with(|| a.token.cmp(&b.token)));
}

/// δ for every token in the union vocabulary of `target` and `reference`,
/// ranked by descending δ.
pub fn log_odds(
    target: &TokenStats,
    reference: &TokenStats,
    prior: &TokenStats,
    config: &LogOddsConfig,
) -> Result<Vec<LogOddsResult>, MarkednessError> {
    if !(config.prior_scale > 0.0 && config.prior_scale.is_finite()) {
        return Err(MarkednessError::InvalidConfig(format!("prior scale {}", config.prior_scale)));
    }
    if !(config.z_threshold >= 0.0 && config.z_threshold.is_finite()) {
        return Err(MarkednessError::InvalidConfig(format!("z threshold {}", config.z_threshold)));
    }
    check_totals("target", target)?;
    check_totals("reference", reference)?;
    check_totals("prior", prior)?;

    let mut vocab: Vec<&str> = target.counts.keys().map(String::as_str).collect();
    vocab.extend(reference.counts.keys().map(String::as_str));
    vocab.sort_unstable();
    vocab.dedup();

    let n1 = target.total as f64;
    let n2 = reference.total as f64;
    let big_p = prior.total as f64 * config.prior_scale;
    let mut out = par::try_map(&vocab, |&token| {
        let raw_prior = prior.count(token);
        if raw_prior == 0 {
            return Err(MarkednessError::PriorGap { token: token.to_owned() });
        }
        let p = raw_prior as f64 * config.prior_scale;
        let c1 = target.count(token);
        let c2 = reference.count(token);
        let (a1, a2) = (c1 as f64 + p, c2 as f64 + p);
        let (b1, b2) = (n1 - c1 as f64 + big_p - p, n2 - c2 as f64 + big_p - p);
        if b1 <= 0.0 || b2 <= 0.0 {
            return Err(MarkednessError::DegenerateDenominator { token: token.to_owned() });
        }
        let delta = ((a1 / b1).ln() - (a2 / b2).ln()) / (1.0 / a1 + 1.0 / a2).sqrt();
        Ok(LogOddsResult {
            token: token.to_owned(),
            delta,
            z_threshold: config.z_threshold,
            significant: delta.abs() > config.z_threshold,
            c1,
            c2,
            prior: raw_prior,
        })
    })?;
    rank(&mut out);
    Ok(out)
}

/// Optional manual annotations (`token<TAB>tag` per line, `#` comments).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagLexicon(BTreeMap<String, String>);

impl TagLexicon {
    pub fn parse(text: &str) -> Result<Self, MarkednessError> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (tok, tag) = line.split_once('\t').ok_or_else(|| MarkednessError::TagLexicon {
                path: "<inline>".into(),
                message: format!("line {}: expected `token<TAB>tag`", i + 1),
            })?;
            map.insert(tok.trim().to_lowercase(), tag.trim().to_owned());
        }
        Ok(TagLexicon(map))
    }

    pub fn load(path: &Path) -> Result<Self, MarkednessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MarkednessError::TagLexicon { path: path.display().to_string(), message: e.to_string() })?;
        TagLexicon::parse(&text).map_err(|e| match e {
            MarkednessError::TagLexicon { message, .. } => {
                MarkednessError::TagLexicon { path: path.display().to_string(), message }
            }
            other => other,
        })
    }

    pub fn tag(&self, token: &str) -> Option<&str> {
        self.0.get(token).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedWordReport {
    pub group: GroupKey,
    pub reference: GroupKey,
    /// Top `top_k` rows by descending δ.
    pub ranked: Vec<LogOddsResult>,
    pub top_k: usize,
    /// Tags for ranked tokens found in a tag lexicon.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tags: BTreeMap<String, String>,
}

impl MarkedWordReport {
    pub fn significant(&self) -> impl Iterator<Item = &LogOddsResult> {
        self.ranked.iter().filter(|r| r.significant)
    }

    pub fn apply_tags(&mut self, lexicon: &TagLexicon) {
        self.tags =
            self.ranked.iter().filter_map(|r| lexicon.tag(&r.token).map(|t| (r.token.clone(), t.to_owned()))).collect();
    }

    /// Markdown table: one row per ranked word.
    pub fn to_markdown(&self) -> String {
        let mut s = format!("**{}** vs **{}** (top {})\n\n", self.group, self.reference, self.top_k);
        let tagged = !self.tags.is_empty();
        s.push_str(if tagged {
            "| rank | word | δ | significant | tag |\n|---:|---|---:|:---:|---|\n"
        } else {
            "| rank | word | δ | significant |\n|---:|---|---:|:---:|\n"
        });
        for (i, r) in self.ranked.iter().enumerate() {
            let _ =
                write!(s, "| {} | {} | {:.3} | {} |", i + 1, r.token, r.delta, if r.significant { "yes" } else { "" });
            if tagged {
                let _ = write!(s, " {} |", self.tags.get(&r.token).map(String::as_str).unwrap_or(""));
            }
            s.push('\n');
        }
        s
    }
}

/// Token counts of a document set under a tokenizer.
pub fn stats_for(docs: &[&PersonaDocument], tokenizer: &TokenizerConfig) -> TokenStats {
    let tokens = par::map(docs, |d| tokenize(&d.text, tokenizer));
    count_stats(&tokens)
}

/// Marked words of `group` against `reference`, with the prior taken from
/// every document in the partition.
pub fn marked_words(
    partition: &Partition<'_>,
    group: &GroupKey,
    reference: &GroupKey,
    k: usize,
    tokenizer: &TokenizerConfig,
    config: &LogOddsConfig,
) -> Result<MarkedWordReport, MarkednessError> {
    let docs_of = |key: &GroupKey| -> Result<&Vec<&PersonaDocument>, MarkednessError> {
        partition.get(key).filter(|d| !d.is_empty()).ok_or_else(|| MarkednessError::EmptyGroup(key.to_string()))
    };
    let target = stats_for(docs_of(group)?, tokenizer);
    let refer = stats_for(docs_of(reference)?, tokenizer);
    let all: Vec<&PersonaDocument> = partition.values().flatten().copied().collect();
    let prior = stats_for(&all, tokenizer);
    let mut ranked = log_odds(&target, &refer, &prior, config)?;
    ranked.truncate(k);
    Ok(MarkedWordReport { group: group.clone(), reference: reference.clone(), ranked, top_k: k, tags: BTreeMap::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{partition, GroupSchema, Race, SourceClass};
    use proptest::prelude::*;

    fn stats(pairs: &[(&str, u64)]) -> TokenStats {
        let mut s = TokenStats::default();
        for (t, n) in pairs {
            s.add(t, *n);
        }
        s
    }

    #[test]
    fn identical_corpora_give_zero() {
        let a = stats(&[("x", 3), ("y", 5)]);
        let prior = stats(&[("x", 6), ("y", 10), ("z", 1)]);
        for r in log_odds(&a, &a, &prior, &LogOddsConfig::default()).unwrap() {
            assert_eq!(r.delta, 0.0);
            assert!(!r.significant);
        }
    }

    #[test]
    fn symmetric_two_token_case() {
        let t = stats(&[("a", 4), ("b", 1)]);
        let r = stats(&[("a", 1), ("b", 4)]);
        let p = stats(&[("a", 5), ("b", 5)]);
        let out = log_odds(&t, &r, &p, &LogOddsConfig::default()).unwrap();
        assert_eq!(out[0].token, "a");
        assert!(out[0].delta > 0.0);
        assert_eq!(out[0].delta, -out[1].delta);
    }

    #[test]
    fn prior_gap_and_degenerate() {
        let t = stats(&[("a", 1)]);
        let r = stats(&[("b", 1)]);
        assert_eq!(
            log_odds(&t, &r, &stats(&[("a", 1), ("c", 5)]), &LogOddsConfig::default()),
            Err(MarkednessError::PriorGap { token: "b".into() })
        );
        // Prior holds only this token, so N - c + P - p = 0.
        let only = stats(&[("a", 2)]);
        assert_eq!(
            log_odds(&only, &only, &only, &LogOddsConfig::default()),
            Err(MarkednessError::DegenerateDenominator { token: "a".into() })
        );
    }

    #[test]
    fn threshold_is_strict() {
        let t = stats(&[("a", 4), ("b", 1)]);
        let r = stats(&[("a", 1), ("b", 4)]);
        let p = stats(&[("a", 5), ("b", 5)]);
        let d = log_odds(&t, &r, &p, &LogOddsConfig::default()).unwrap()[0].delta;
        let cfg = LogOddsConfig { z_threshold: d, ..Default::default() };
        assert!(!log_odds(&t, &r, &p, &cfg).unwrap()[0].significant);
    }

    #[test]
    fn tag_lexicon_parse() {
        let lex = TagLexicon::parse("# tags\nheritage\tcultural\nStruggle\tadversity\n").unwrap();
        assert_eq!(lex.tag("struggle"), Some("adversity"));
        assert!(TagLexicon::parse("no tab here").is_err());
    }

    #[test]
    fn marked_words_self_reference_is_flat() {
        let docs = vec![
            crate::corpus::tests::doc("1", Race::Asian, None),
            crate::corpus::tests::doc("2", Race::Asian, None),
            crate::corpus::tests::doc("3", Race::White, None),
        ];
        let part = partition(&docs, &GroupSchema::RACE_SOURCE);
        let g = GroupKey::race_source(Race::Asian, SourceClass::Human);
        let rep = marked_words(&part, &g, &g, 10, &TokenizerConfig::raw(), &LogOddsConfig::default()).unwrap();
        assert!(rep.ranked.iter().all(|r| r.delta == 0.0));
        assert_eq!(rep.significant().count(), 0);
        let missing = GroupKey::race_source(Race::Asian, SourceClass::Model);
        assert!(matches!(
            marked_words(&part, &missing, &g, 10, &TokenizerConfig::raw(), &LogOddsConfig::default()),
            Err(MarkednessError::EmptyGroup(_))
        ));
        assert!(rep.to_markdown().contains("| 1 |"));
    }

    fn table() -> impl Strategy<Value = (Vec<u64>, Vec<u64>, Vec<u64>)> {
        (2usize..12).prop_flat_map(|n| {
            (prop::collection::vec(0u64..15, n), prop::collection::vec(0u64..15, n), prop::collection::vec(1u64..10, n))
        })
    }

    fn equal_total_table() -> impl Strategy<Value = (Vec<u64>, Vec<u64>, Vec<u64>)> {
        (2usize..12).prop_flat_map(|n| {
            (prop::collection::vec(0u64..15, n), prop::collection::vec(1u64..10, n))
                .prop_flat_map(|(c1, extra)| (Just(c1.clone()), Just(c1).prop_shuffle(), Just(extra)))
        })
    }

    fn to_stats(v: &[u64], extra: &[u64]) -> TokenStats {
        let mut s = TokenStats::default();
        for (i, (&a, &b)) in v.iter().zip(extra).enumerate() {
            s.add(&format!("w{i:02}"), a + b);
        }
        s
    }

    proptest! {
        #[test]
        fn antisymmetric((c1, c2, extra) in table()) {
            let zero = vec![0; c1.len()];
            let (t, r) = (to_stats(&c1, &zero), to_stats(&c2, &zero));
            let prior = {
                let mut p = to_stats(&extra, &zero);
                p.merge(&t);
                p.merge(&r);
                p
            };
            let cfg = LogOddsConfig::default();
            let ab: BTreeMap<_, _> = log_odds(&t, &r, &prior, &cfg).unwrap().into_iter().map(|x| (x.token, x.delta)).collect();
            let ba: BTreeMap<_, _> = log_odds(&r, &t, &prior, &cfg).unwrap().into_iter().map(|x| (x.token, x.delta)).collect();
            for (k, v) in &ab {
                prop_assert!((v + ba[k]).abs() < 1e-12);
            }
        }

        // Holds when both corpora have equal totals. With unequal totals a
        // large prior can move δ through zero, so the property is scoped.
        #[test]
        fn larger_prior_shrinks((c1, c2, extra) in equal_total_table(), scale in 1.5f64..20.0) {
            let zero = vec![0; c1.len()];
            let (t, r) = (to_stats(&c1, &zero), to_stats(&c2, &zero));
            let mut prior = to_stats(&extra, &zero);
            prior.merge(&t);
            prior.merge(&r);
            let small = log_odds(&t, &r, &prior, &LogOddsConfig::default()).unwrap();
            let big = log_odds(&t, &r, &prior, &LogOddsConfig { prior_scale: scale, ..Default::default() }).unwrap();
            let big: BTreeMap<_, _> = big.into_iter().map(|x| (x.token, x.delta)).collect();
            for s in small {
                prop_assert!(big[&s.token].abs() <= s.delta.abs() + 1e-12, "{} {} {}", s.token, s.delta, big[&s.token]);
            }
        }

        #[test]
        fn ranking_ignores_insertion_order((c1, c2, extra) in table()) {
            let zero = vec![0; c1.len()];
            let t = to_stats(&c1, &zero);
            let r = to_stats(&c2, &zero);
            let mut prior = to_stats(&extra, &zero);
            prior.merge(&t);
            prior.merge(&r);
            let mut rev = TokenStats::default();
            for (k, v) in t.counts.iter().rev() {
                rev.add(k, *v);
            }
            let cfg = LogOddsConfig::default();
            prop_assert_eq!(log_odds(&t, &r, &prior, &cfg).unwrap(), log_odds(&rev, &r, &prior, &cfg).unwrap());
        }
    }
}
