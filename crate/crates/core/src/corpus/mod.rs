//! Persona data model, corpus ingestion/persistence and stratification.
//!
//! A corpus is a flat sequence of [`PersonaDocument`]s: one answer to one of
//! the six self-description questions, written either by a survey
//! participant or by a model under one of four prompt settings.

mod gate;
mod io;
mod types;

pub use gate::{
    gate_authenticity, group_by_participant, AuthenticityScorer, AuthenticityVerdict, GateError, GateMode, GateOptions,
    GateOutcome, HttpScorer, ScorerError, StubScorer,
};
pub use io::{load_corpus, read_corpus, save_corpus, write_corpus, CorpusFormat, DocumentRecord};
pub use types::{
    AgeBand, AuthorProfile, Gender, PersonaDocument, PromptSetting, QuestionId, Race, Relationship, Source,
    SourceClass, SURVEY_AGE_BANDS,
};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: invalid field `{field}`: {message}")]
    Validation { line: usize, field: &'static str, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    pub(crate) fn validation(line: usize, field: &'static str, message: impl Into<String>) -> Self {
        CorpusError::Validation { line, field, message: message.into() }
    }
}

/// Which document attributes take part in a [`GroupKey`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupSchema {
    #[serde(default)]
    pub race: bool,
    #[serde(default)]
    pub source: bool,
    #[serde(default)]
    pub model: bool,
    #[serde(default)]
    pub setting: bool,
    #[serde(default)]
    pub question: bool,
}

impl GroupSchema {
    /// Race × generation source, the stratification used for every table.
    pub const RACE_SOURCE: GroupSchema =
        GroupSchema { race: true, source: true, model: false, setting: false, question: false };

    pub fn key_of(&self, doc: &PersonaDocument) -> GroupKey {
        GroupKey {
            race: self.race.then_some(doc.profile.race),
            source: self.source.then(|| doc.source.class()),
            model: if self.model { doc.source.model_name().map(str::to_owned) } else { None },
            setting: if self.setting { doc.prompt_setting } else { None },
            question: self.question.then_some(doc.question),
        }
    }
}

/// Stratification key. Unused dimensions are `None`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct GroupKey {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub race: Option<Race>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub source: Option<SourceClass>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub setting: Option<PromptSetting>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub question: Option<QuestionId>,
}

impl GroupKey {
    pub fn race_source(race: Race, source: SourceClass) -> Self {
        GroupKey { race: Some(race), source: Some(source), ..GroupKey::default() }
    }

    /// File-name friendly rendering, e.g. `asian_model`.
    pub fn slug(&self) -> String {
        let mut parts: Vec<String> = Vec::new();
        if let Some(r) = self.race {
            parts.push(r.code().to_owned());
        }
        if let Some(s) = self.source {
            parts.push(s.code().to_owned());
        }
        if let Some(m) = &self.model {
            parts.push(m.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '-' }).collect());
        }
        if let Some(s) = self.setting {
            parts.push(s.code().to_owned());
        }
        if let Some(q) = self.question {
            parts.push(q.code().to_lowercase());
        }
        if parts.is_empty() {
            "all".to_owned()
        } else {
            parts.join("_")
        }
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        if let Some(r) = self.race {
            parts.push(r.label().to_owned());
        }
        if let Some(s) = self.source {
            parts.push(s.label().to_owned());
        }
        if let Some(m) = &self.model {
            parts.push(m.clone());
        }
        if let Some(s) = self.setting {
            parts.push(s.label().to_owned());
        }
        if let Some(q) = self.question {
            parts.push(q.code().to_owned());
        }
        if parts.is_empty() {
            f.write_str("all")
        } else {
            f.write_str(&parts.join(" / "))
        }
    }
}

/// Documents grouped by key. Ordered so every downstream report is stable.
pub type Partition<'a> = BTreeMap<GroupKey, Vec<&'a PersonaDocument>>;

/// Split `docs` into groups. Every document lands in exactly one group and
/// documents keep their input order inside a group.
pub fn partition<'a>(docs: &'a [PersonaDocument], schema: &GroupSchema) -> Partition<'a> {
    let mut out: Partition<'a> = BTreeMap::new();
    for doc in docs {
        out.entry(schema.key_of(doc)).or_default().push(doc);
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn doc(id: &str, race: Race, model: Option<&str>) -> PersonaDocument {
        PersonaDocument {
            id: id.into(),
            text: format!("text of {id}"),
            question: QuestionId::Q1,
            source: match model {
                Some(m) => Source::Model(m.into()),
                None => Source::Human,
            },
            prompt_setting: model.map(|_| PromptSetting::RaceOnly),
            profile: AuthorProfile::new(race, Gender::Female, "30-34"),
            participant: None,
        }
    }

    #[test]
    fn partition_empty_and_single_group() {
        assert!(partition(&[], &GroupSchema::RACE_SOURCE).is_empty());
        let docs: Vec<_> = (0..5).map(|i| doc(&format!("d{i}"), Race::Asian, None)).collect();
        let p = partition(&docs, &GroupSchema::RACE_SOURCE);
        assert_eq!(p.len(), 1);
        assert_eq!(p.values().next().unwrap().len(), 5);
    }

    #[test]
    fn key_respects_schema() {
        let d = doc("x", Race::White, Some("gpt-4o"));
        let k = GroupSchema::RACE_SOURCE.key_of(&d);
        assert_eq!(k, GroupKey::race_source(Race::White, SourceClass::Model));
        assert_eq!(k.slug(), "white_model");
        let all = GroupSchema { race: true, source: true, model: true, setting: true, question: true };
        let k = all.key_of(&d);
        assert_eq!(k.model.as_deref(), Some("gpt-4o"));
        assert_eq!(k.setting, Some(PromptSetting::RaceOnly));
        assert_eq!(k.slug(), "white_model_gpt-4o_race_only_q1");
    }

    proptest! {
        #[test]
        fn partition_is_complete(spec in proptest::collection::vec((0usize..7, any::<bool>()), 0..60)) {
            let docs: Vec<_> = spec
                .iter()
                .enumerate()
                .map(|(i, (r, m))| doc(&format!("d{i}"), Race::ALL[*r], m.then_some("m")))
                .collect();
            let p = partition(&docs, &GroupSchema::RACE_SOURCE);
            let total: usize = p.values().map(Vec::len).sum();
            prop_assert_eq!(total, docs.len());
            let mut ids: Vec<&str> = p.values().flatten().map(|d| d.id.as_str()).collect();
            ids.sort_unstable();
            let mut expected: Vec<&str> = docs.iter().map(|d| d.id.as_str()).collect();
            expected.sort_unstable();
            prop_assert_eq!(ids, expected);
        }
    }
}
