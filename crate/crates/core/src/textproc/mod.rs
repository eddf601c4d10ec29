//! Tokenization, sentence segmentation, corpus counts and TF-IDF.

mod tfidf;

pub use tfidf::{pseudo_documents, tfidf, top_terms, TfIdfTable};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("TF-IDF needs at least one non-empty document")]
    EmptyCorpus,
    #[error("reading stop-word list {path}: {source}")]
    StopWordsIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords.txt");

/// Stop-word set read from a one-token-per-line file with `#` comments.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StopWords(BTreeSet<String>);

impl StopWords {
    pub fn parse(text: &str) -> Self {
        StopWords(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .flat_map(|l| tokenize(l, &TokenizerConfig::raw()))
                .collect(),
        )
    }

    pub fn english() -> Self {
        StopWords::parse(DEFAULT_STOPWORDS)
    }

    pub fn from_file(path: &Path) -> Result<Self, TextError> {
        std::fs::read_to_string(path)
            .map(|t| StopWords::parse(&t))
            .map_err(|source| TextError::StopWordsIo { path: path.display().to_string(), source })
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenizerConfig {
    /// Tokens in this set are dropped when present.
    pub stop_words: Option<StopWords>,
}

impl TokenizerConfig {
    /// Keep every token.
    pub fn raw() -> Self {
        TokenizerConfig { stop_words: None }
    }

    /// Drop the built-in English stop words.
    pub fn english() -> Self {
        TokenizerConfig { stop_words: Some(StopWords::english()) }
    }
}

fn is_apostrophe(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '\u{02BC}')
}

/// Lowercased alphabetic tokens. An apostrophe between two letters stays
/// inside the token (`don't`); digits and punctuation split tokens and are
/// dropped. Text is NFC-normalized first so composed and decomposed accents
/// produce the same token.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    let folded: String = text.nfc().flat_map(char::to_lowercase).nfc().collect();
    let chars: Vec<char> = folded.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut flush = |cur: &mut String| {
        if !cur.is_empty() {
            let tok = std::mem::take(cur);
            if !config.stop_words.as_ref().is_some_and(|s| s.contains(&tok)) {
                out.push(tok);
            }
        }
    };
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphabetic() {
            cur.push(c);
        } else if is_apostrophe(c) && !cur.is_empty() && chars.get(i + 1).is_some_and(|n| n.is_alphabetic()) {
            cur.push('\'');
        } else {
            flush(&mut cur);
        }
    }
    flush(&mut cur);
    out
}

/// Abbreviations whose trailing period does not end a sentence.
const ABBREVIATIONS: [&str; 18] = [
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "inc", "ltd", "co", "corp", "vs", "e.g", "i.e", "mt", "dept",
    "approx",
];

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201D}' | '\u{2019}')
}

/// Split on `.`, `!` or `?` (plus any closing quotes/brackets) followed by
/// whitespace or end of text. A period after a listed abbreviation is not a
/// boundary. Returned sentences are trimmed and non-empty.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (_, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && (matches!(chars[j].1, '.' | '!' | '?') || is_closer(chars[j].1)) {
                j += 1;
            }
            let at_boundary = j == chars.len() || chars[j].1.is_whitespace();
            if at_boundary && !(c == '.' && j == i + 1 && preceded_by_abbreviation(text, chars[i].0)) {
                let end = if j == chars.len() { text.len() } else { chars[j].0 };
                push_trimmed(&mut out, &text[start..end]);
                start = end;
            }
            i = j;
        } else {
            i += 1;
        }
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let t = s.trim();
    if !t.is_empty() {
        out.push(t.to_owned());
    }
}

fn preceded_by_abbreviation(text: &str, dot_byte: usize) -> bool {
    let before = &text[..dot_byte];
    let word_start = before
        .rfind(|c: char| c.is_whitespace() || matches!(c, '(' | '"' | '\u{201C}'))
        .map(|p| p + before[p..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(0);
    let word = before[word_start..].to_lowercase();
    !word.is_empty() && ABBREVIATIONS.contains(&word.as_str())
}

/// Token counts for a corpus. `total` always equals the sum of `counts`,
/// and no zero entries are stored.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenStats {
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
}

impl TokenStats {
    pub fn count(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn add(&mut self, token: &str, n: u64) {
        if n == 0 {
            return;
        }
        *self.counts.entry(token.to_owned()).or_insert(0) += n;
        self.total += n;
    }

    pub fn merge(&mut self, other: &TokenStats) {
        for (t, &n) in &other.counts {
            self.add(t, n);
        }
    }

    pub fn vocabulary_size(&self) -> usize {
        self.counts.len()
    }
}

/// Exact token counts over tokenized documents.
pub fn count_stats<D: AsRef<[String]>>(docs: &[D]) -> TokenStats {
    let mut stats = TokenStats::default();
    for doc in docs {
        for tok in doc.as_ref() {
            stats.add(tok, 1);
        }
    }
    stats
}
