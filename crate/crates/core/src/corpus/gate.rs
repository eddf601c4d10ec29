//! Authenticity gate: drop survey responses that an AI-text detector scores
//! as probably machine-written.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::PersonaDocument;
use crate::net::{bounded_map, Endpoint, HttpError, JsonClient, RetryPolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScorerError {
    #[error("scorer unavailable: {0}")]
    Unavailable(String),
    #[error("malformed scorer response: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum GateError {
    #[error("threshold {0} is outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("scorer unavailable for document `{document_id}`: {reason}")]
    ScorerUnavailable { document_id: String, reason: String },
    #[error("scorer returned {probability} for document `{document_id}`, outside [0, 1]")]
    OutOfRange { document_id: String, probability: f64 },
}

/// Returns the probability in `[0, 1]` that a document was machine-written.
pub trait AuthenticityScorer: Send + Sync {
    fn id(&self) -> String;
    fn score(&self, doc: &PersonaDocument) -> Result<f64, ScorerError>;
}

/// Fixed score table keyed by document id, for tests and offline replays.
#[derive(Debug, Clone, Default)]
pub struct StubScorer {
    pub scores: HashMap<String, f64>,
    pub default: f64,
}

impl StubScorer {
    pub fn new(scores: HashMap<String, f64>, default: f64) -> Self {
        StubScorer { scores, default }
    }

    /// Load a JSON object mapping document id to probability.
    pub fn from_json_file(path: &Path, default: f64) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let scores: HashMap<String, f64> =
            serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(StubScorer { scores, default })
    }
}

impl AuthenticityScorer for StubScorer {
    fn id(&self) -> String {
        "stub".to_owned()
    }

    fn score(&self, doc: &PersonaDocument) -> Result<f64, ScorerError> {
        Ok(*self.scores.get(&doc.id).unwrap_or(&self.default))
    }
}

/// Detector reached over HTTP: POST `{"document": <text>}`, read a
/// probability from the JSON response at `probability_pointer`.
#[derive(Debug, Clone)]
pub struct HttpScorer {
    client: JsonClient,
    /// JSON pointer (RFC 6901) to the probability, e.g. `/probability`.
    pub probability_pointer: String,
}

impl HttpScorer {
    pub fn new(endpoint: Endpoint, probability_pointer: impl Into<String>) -> Self {
        HttpScorer { client: JsonClient::new(endpoint), probability_pointer: probability_pointer.into() }
    }

    fn extract(&self, v: &Value) -> Result<f64, ScorerError> {
        v.pointer(&self.probability_pointer)
            .and_then(Value::as_f64)
            .ok_or_else(|| ScorerError::Malformed(format!("no number at `{}` in {v}", self.probability_pointer)))
    }
}

impl AuthenticityScorer for HttpScorer {
    fn id(&self) -> String {
        format!("http:{}", self.client.endpoint().url)
    }

    fn score(&self, doc: &PersonaDocument) -> Result<f64, ScorerError> {
        let v = self.client.post(None, &json!({ "document": doc.text })).map_err(|e| match e {
            HttpError::Fatal(m) => ScorerError::Malformed(m),
            other => ScorerError::Unavailable(other.to_string()),
        })?;
        self.extract(&v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// Remove all of a participant's documents when their mean score reaches
    /// the threshold.
    #[default]
    Participant,
    /// Remove individual documents whose own score reaches the threshold.
    Document,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateOptions {
    pub threshold: f64,
    pub mode: GateMode,
    pub max_inflight: usize,
    pub retry: RetryPolicy,
}

impl Default for GateOptions {
    fn default() -> Self {
        GateOptions { threshold: 0.85, mode: GateMode::Participant, max_inflight: 4, retry: RetryPolicy::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthenticityVerdict {
    pub document_id: String,
    pub participant: String,
    pub ai_probability: f64,
    /// Whether the aggregate the gate acted on reached the threshold.
    pub flagged: bool,
}

#[derive(Debug, Clone, Default)]
pub struct GateOutcome {
    pub kept: Vec<PersonaDocument>,
    pub removed: Vec<PersonaDocument>,
    pub verdicts: Vec<AuthenticityVerdict>,
    pub participants_kept: usize,
    pub participants_removed: usize,
}

/// Group documents by [`PersonaDocument::participant_id`].
pub fn group_by_participant(docs: &[PersonaDocument]) -> BTreeMap<String, Vec<PersonaDocument>> {
    let mut out: BTreeMap<String, Vec<PersonaDocument>> = BTreeMap::new();
    for d in docs {
        out.entry(d.participant_id().to_owned()).or_default().push(d.clone());
    }
    out
}

/// Score every document and split participants into kept and removed.
///
/// A scorer failure that survives the retry budget aborts the whole gate:
/// documents are never passed through unscored.
pub fn gate_authenticity(
    by_participant: &BTreeMap<String, Vec<PersonaDocument>>,
    scorer: &dyn AuthenticityScorer,
    opts: &GateOptions,
) -> Result<GateOutcome, GateError> {
    if !(0.0..=1.0).contains(&opts.threshold) {
        return Err(GateError::InvalidThreshold(opts.threshold));
    }
    let flat: Vec<(&str, &PersonaDocument)> =
        by_participant.iter().flat_map(|(p, docs)| docs.iter().map(move |d| (p.as_str(), d))).collect();

    let results = bounded_map(
        &flat,
        opts.max_inflight,
        |_, (_, doc)| opts.retry.run(|_| scorer.score(doc), |e| matches!(e, ScorerError::Unavailable(_))),
        |_| true,
    );

    let mut scores: Vec<f64> = Vec::with_capacity(flat.len());
    for ((_, doc), r) in flat.iter().zip(results) {
        let p = match r {
            Some(Ok(p)) => p,
            Some(Err(e)) => {
                return Err(GateError::ScorerUnavailable { document_id: doc.id.clone(), reason: e.to_string() })
            }
            None => {
                return Err(GateError::ScorerUnavailable {
                    document_id: doc.id.clone(),
                    reason: "not scored: gate aborted after an earlier failure".into(),
                })
            }
        };
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(GateError::OutOfRange { document_id: doc.id.clone(), probability: p });
        }
        scores.push(p);
    }

    let mut out = GateOutcome::default();
    let mut offset = 0;
    for (participant, docs) in by_participant {
        let own = &scores[offset..offset + docs.len()];
        offset += docs.len();
        let participant_flag =
            if own.is_empty() { false } else { crate::numeric::mean(own).unwrap_or(0.0) >= opts.threshold };
        let mut any_removed = false;
        let mut any_kept = false;
        for (doc, &p) in docs.iter().zip(own) {
            let flagged = match opts.mode {
                GateMode::Participant => participant_flag,
                GateMode::Document => p >= opts.threshold,
            };
            out.verdicts.push(AuthenticityVerdict {
                document_id: doc.id.clone(),
                participant: participant.clone(),
                ai_probability: p,
                flagged,
            });
            if flagged {
                any_removed = true;
                out.removed.push(doc.clone());
            } else {
                any_kept = true;
                out.kept.push(doc.clone());
            }
        }
        if any_kept {
            out.participants_kept += 1;
        } else if any_removed {
            out.participants_removed += 1;
        }
    }
    log::info!(
        "authenticity gate: kept {} participants ({} documents), removed {} ({} documents)",
        out.participants_kept,
        out.kept.len(),
        out.participants_removed,
        out.removed.len()
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AuthorProfile, Gender, QuestionId, Race, Source};
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn participant_docs(p: &str, n: usize) -> Vec<PersonaDocument> {
        (0..n)
            .map(|q| PersonaDocument {
                id: format!("{p}-q{}", q + 1),
                text: "Some honest words.".into(),
                question: QuestionId::ALL[q % 6],
                source: Source::Human,
                prompt_setting: None,
                profile: AuthorProfile::new(Race::Asian, Gender::Male, "40-44"),
                participant: Some(p.into()),
            })
            .collect()
    }

    fn opts(threshold: f64) -> GateOptions {
        GateOptions { threshold, retry: RetryPolicy::immediate(0), ..GateOptions::default() }
    }

    #[test]
    fn all_zero_scores_remove_nothing() {
        let docs: Vec<_> = (0..5).flat_map(|i| participant_docs(&format!("p{i}"), 6)).collect();
        let out = gate_authenticity(&group_by_participant(&docs), &StubScorer::default(), &opts(0.85)).unwrap();
        assert!(out.removed.is_empty());
        assert_eq!(out.kept.len(), 30);
        assert_eq!(out.participants_kept, 5);
    }

    #[test]
    fn fully_flagged_participant_is_removed() {
        let docs: Vec<_> = ["a", "b"].iter().flat_map(|p| participant_docs(p, 6)).collect();
        let scores =
            docs.iter().filter(|d| d.participant.as_deref() == Some("b")).map(|d| (d.id.clone(), 1.0)).collect();
        let out = gate_authenticity(&group_by_participant(&docs), &StubScorer::new(scores, 0.0), &opts(0.85)).unwrap();
        assert_eq!(out.removed.len(), 6);
        assert!(out.removed.iter().all(|d| d.participant.as_deref() == Some("b")));
        assert_eq!(out.participants_removed, 1);
        assert_eq!(out.kept.len() + out.removed.len(), docs.len());
    }

    #[test]
    fn document_mode_gates_individually() {
        let docs = participant_docs("a", 6);
        let scores = [(docs[0].id.clone(), 0.99)].into_iter().collect();
        let mut o = opts(0.85);
        o.mode = GateMode::Document;
        let out = gate_authenticity(&group_by_participant(&docs), &StubScorer::new(scores, 0.0), &o).unwrap();
        assert_eq!(out.removed.len(), 1);
        assert_eq!(out.kept.len(), 5);
    }

    #[test]
    fn rejects_bad_threshold() {
        let r = gate_authenticity(&BTreeMap::new(), &StubScorer::default(), &opts(1.5));
        assert!(matches!(r, Err(GateError::InvalidThreshold(_))));
    }

    struct Flaky {
        calls: AtomicUsize,
        fail_first: usize,
    }

    impl AuthenticityScorer for Flaky {
        fn id(&self) -> String {
            "flaky".into()
        }
        fn score(&self, _: &PersonaDocument) -> Result<f64, ScorerError> {
            if self.calls.fetch_add(1, Ordering::SeqCst) < self.fail_first {
                Err(ScorerError::Unavailable("down".into()))
            } else {
                Ok(0.1)
            }
        }
    }

    #[test]
    fn retries_then_aborts_when_scorer_stays_down() {
        let docs = participant_docs("a", 1);
        let grouped = group_by_participant(&docs);
        let flaky = Flaky { calls: AtomicUsize::new(0), fail_first: 1 };
        let mut o = opts(0.85);
        o.retry = RetryPolicy::immediate(1);
        assert!(gate_authenticity(&grouped, &flaky, &o).is_ok());

        let dead = Flaky { calls: AtomicUsize::new(0), fail_first: usize::MAX };
        let r = gate_authenticity(&grouped, &dead, &o);
        assert!(matches!(r, Err(GateError::ScorerUnavailable { .. })));
    }

    proptest! {
        #[test]
        fn raising_threshold_never_removes_more(
            scores in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 1..7), 1..20),
            t1 in 0.0f64..=1.0,
            t2 in 0.0f64..=1.0,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let mut docs = Vec::new();
            let mut table = HashMap::new();
            for (i, ps) in scores.iter().enumerate() {
                let d = participant_docs(&format!("p{i:02}"), ps.len());
                for (doc, s) in d.iter().zip(ps) {
                    table.insert(doc.id.clone(), *s);
                }
                docs.extend(d);
            }
            let grouped = group_by_participant(&docs);
            let scorer = StubScorer::new(table, 0.0);
            let a = gate_authenticity(&grouped, &scorer, &opts(lo)).unwrap();
            let b = gate_authenticity(&grouped, &scorer, &opts(hi)).unwrap();
            prop_assert!(b.participants_removed <= a.participants_removed);
            prop_assert_eq!(a.kept.len() + a.removed.len(), docs.len());
        }
    }
}
