use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::TextError;
use crate::par;

/// Sparse TF-IDF scores, one row per document. Tokens absent from a
/// document have an implicit score of zero and are not stored.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TfIdfTable {
    pub rows: Vec<BTreeMap<String, f64>>,
    /// Sorted vocabulary across all documents.
    pub vocabulary: Vec<String>,
    pub idf: BTreeMap<String, f64>,
}

impl TfIdfTable {
    pub fn score(&self, doc: usize, token: &str) -> f64 {
        self.rows.get(doc).and_then(|r| r.get(token)).copied().unwrap_or(0.0)
    }

    pub fn num_documents(&self) -> usize {
        self.rows.len()
    }

    /// Mean score over the distinct tokens of one document; 0 for an empty
    /// document.
    pub fn mean_score(&self, doc: usize) -> f64 {
        let row = &self.rows[doc];
        if row.is_empty() {
            0.0
        } else {
            crate::numeric::compensated_sum(row.values().copied()) / row.len() as f64
        }
    }
}

/// tf(t, d) = count(t, d) / |d|; idf(t) = ln((1 + D) / (1 + df(t))) + 1.
pub fn tfidf<D: AsRef<[String]> + Sync>(docs: &[D]) -> Result<TfIdfTable, TextError> {
    if docs.iter().all(|d| d.as_ref().is_empty()) {
        return Err(TextError::EmptyCorpus);
    }
    let counts: Vec<BTreeMap<&str, u64>> = par::map(docs, |d| {
        let mut m = BTreeMap::new();
        for t in d.as_ref() {
            *m.entry(t.as_str()).or_insert(0u64) += 1;
        }
        m
    });
    let mut df: BTreeMap<&str, u64> = BTreeMap::new();
    for m in &counts {
        for t in m.keys() {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let n_docs = docs.len() as f64;
    let idf: BTreeMap<String, f64> =
        df.iter().map(|(t, &n)| ((*t).to_owned(), ((1.0 + n_docs) / (1.0 + n as f64)).ln() + 1.0)).collect();
    let rows = par::map(&counts, |m| {
        let len: u64 = m.values().sum();
        m.iter().map(|(t, &c)| ((*t).to_owned(), (c as f64 / len as f64) * idf[*t])).collect::<BTreeMap<_, _>>()
    });
    let vocabulary = idf.keys().cloned().collect();
    Ok(TfIdfTable { rows, vocabulary, idf })
}

/// Rank tokens by their score summed over `group_docs`, highest first, ties
/// broken lexicographically. Returns at most `k` entries.
pub fn top_terms(table: &TfIdfTable, group_docs: &[usize], k: usize) -> Vec<(String, f64)> {
    let docs: BTreeSet<usize> = group_docs.iter().copied().collect();
    let mut agg: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for &d in &docs {
        if let Some(row) = table.rows.get(d) {
            for (t, &s) in row {
                agg.entry(t.as_str()).or_default().push(s);
            }
        }
    }
    let mut ranked: Vec<(String, f64)> =
        agg.into_iter().map(|(t, v)| (t.to_owned(), crate::numeric::compensated_sum(v))).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

/// Concatenate each group's documents into one pseudo-document, so groups
/// become the document collection for TF-IDF.
pub fn pseudo_documents<D: AsRef<[String]>>(groups: &[Vec<D>]) -> Vec<Vec<String>> {
    groups.iter().map(|g| g.iter().flat_map(|d| d.as_ref().iter().cloned()).collect()).collect()
}
