//! Persona generation: prompts for the four disclosure settings, chat
//! providers, and a resumable batch runner that writes model documents.

mod batch;
mod prompt;
mod provider;

pub use batch::{run_batch, BatchLimits, BatchOutcome, JobFailure, Journal, JournalEntry, JournalEvent};
pub use prompt::{placeholders, required_fields, PersonaClauses, PromptTemplate};
pub use provider::{ChatMessage, ChatProvider, Completion, OpenAiCompatible, StubProvider};

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AuthorProfile, PromptSetting, QuestionId};
use crate::digest::sha256_hex;

pub const DEFAULT_TEMPERATURE: f64 = 1.0;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("profile `{profile}` lacks `{field}`, which the prompt setting requires")]
    MissingProfileField { profile: String, field: String },
    #[error("prompt template: {0}")]
    Template(String),
    #[error("profiles line {line}: {message}")]
    Profile { line: usize, message: String },
    #[error("duplicate job: {0}")]
    DuplicateJob(String),
    #[error("no provider configured for model `{0}`")]
    UnknownModel(String),
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("quota exceeded: {0}")]
    QuotaExceeded(String),
    #[error("journal {path}: {message}")]
    Journal { path: String, message: String },
}

/// A persona to generate for: demographic profile plus an id that ties its
/// generated documents together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationProfile {
    pub id: String,
    #[serde(flatten)]
    pub profile: AuthorProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub income: Option<String>,
}

#[derive(Deserialize)]
struct ProfileRow {
    #[serde(default)]
    id: Option<String>,
    #[serde(flatten)]
    profile: AuthorProfile,
    #[serde(default)]
    income: Option<String>,
}

/// Read profiles, one JSON object per line. Rows without an `id` get
/// `P001`, `P002`, ... by position.
pub fn load_profiles(path: &Path) -> Result<Vec<GenerationProfile>, GenError> {
    let f = std::fs::File::open(path)
        .map_err(|e| GenError::Profile { line: 0, message: format!("{}: {e}", path.display()) })?;
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let err = |message: String| GenError::Profile { line: i + 1, message };
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ProfileRow = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        let id = row.id.unwrap_or_else(|| format!("P{:03}", out.len() + 1));
        if !ids.insert(id.clone()) {
            return Err(err(format!("duplicate profile id `{id}`")));
        }
        out.push(GenerationProfile { id, profile: row.profile, income: row.income });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state", content = "reason")]
pub enum JobStatus {
    #[default]
    Pending,
    Done,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationJob {
    pub profile: GenerationProfile,
    pub setting: PromptSetting,
    pub question: QuestionId,
    pub model: String,
    pub temperature: f64,
    #[serde(default)]
    pub status: JobStatus,
}

impl GenerationJob {
    /// Content hash of everything that determines the request.
    pub fn hash(&self) -> String {
        let key = serde_json::json!({
            "profile": self.profile,
            "setting": self.setting,
            "question": self.question,
            "model": self.model,
            "temperature": self.temperature,
        });
        sha256_hex(key.to_string().as_bytes())
    }

    pub fn document_id(&self) -> String {
        format!("{}-{}-{}-{}", self.profile.id, model_slug(&self.model), self.setting.code(), self.question.code())
    }

    /// The synthetic persona this answer belongs to: one per profile,
    /// model and setting.
    pub fn persona_id(&self) -> String {
        format!("{}-{}-{}", self.profile.id, model_slug(&self.model), self.setting.code())
    }
}

fn model_slug(model: &str) -> String {
    model
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

pub fn build_prompt(job: &GenerationJob, template: &PromptTemplate) -> Result<String, GenError> {
    template.build(job)
}

/// Every (profile, setting, question, model) combination, in that nesting
/// order.
pub fn plan_jobs(
    profiles: &[GenerationProfile],
    settings: &[PromptSetting],
    models: &[String],
    temperature: f64,
) -> Result<Vec<GenerationJob>, GenError> {
    let mut jobs = Vec::with_capacity(expected_cardinality(profiles.len(), settings.len(), models.len()));
    for profile in profiles {
        for &setting in settings {
            for question in QuestionId::ALL {
                for model in models {
                    jobs.push(GenerationJob {
                        profile: profile.clone(),
                        setting,
                        question,
                        model: model.clone(),
                        temperature,
                        status: JobStatus::Pending,
                    });
                }
            }
        }
    }
    check_unique(&jobs)?;
    Ok(jobs)
}

pub(crate) fn check_unique(jobs: &[GenerationJob]) -> Result<(), GenError> {
    let mut seen = BTreeSet::new();
    for j in jobs {
        if !seen.insert(j.document_id()) {
            return Err(GenError::DuplicateJob(j.document_id()));
        }
    }
    Ok(())
}

/// Documents a full batch should produce.
pub const fn expected_cardinality(profiles: usize, settings: usize, models: usize) -> usize {
    profiles * settings * QuestionId::ALL.len() * models
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::{Gender, Race, Relationship};
    use crate::textproc::{tokenize, TokenizerConfig};
    use proptest::prelude::*;

    pub(crate) fn full_profile(id: &str) -> GenerationProfile {
        let mut p = AuthorProfile::new(Race::AfricanAmericanBlack, Gender::Female, "50-54");
        p.occupation = Some("Executive Engineering Project Manager".into());
        p.nationality = Some("United States".into());
        p.relationship = Some(Relationship::NeverMarried);
        GenerationProfile { id: id.into(), profile: p, income: None }
    }

    fn job(profile: GenerationProfile, setting: PromptSetting) -> GenerationJob {
        GenerationJob {
            profile,
            setting,
            question: QuestionId::Q1,
            model: "m".into(),
            temperature: DEFAULT_TEMPERATURE,
            status: JobStatus::Pending,
        }
    }

    #[test]
    fn race_only_hides_other_fields() {
        let mut p = full_profile("a");
        p.profile.race = Race::Asian;
        let prompt = build_prompt(&job(p, PromptSetting::RaceOnly), &PromptTemplate::default()).unwrap();
        assert!(prompt.contains("Asian"));
        for leak in ["52", "50-54", "Engineering", "woman", "never married", "United States"] {
            assert!(!prompt.contains(leak), "{leak} leaked");
        }
    }

    #[test]
    fn full_profile_fills_every_slot() {
        let j = job(full_profile("a"), PromptSetting::FullProfile);
        let t = PromptTemplate::default();
        let clause = t.persona_clause(&j).unwrap();
        assert_eq!(
            clause,
            "You are a 52 year-old African American woman working as a Executive Engineering Project Manager, USA. \
             You were born in United States. Your relationship status is currently never married."
        );
        let prompt = build_prompt(&j, &t).unwrap();
        assert!(!prompt.contains('<'));
        assert_eq!(prompt, build_prompt(&j, &t).unwrap());
        assert!(prompt.ends_with("Question: Please describe yourself.\n"));
    }

    #[test]
    fn missing_field_is_named() {
        let mut p = full_profile("a");
        p.profile.occupation = None;
        let e = build_prompt(&job(p.clone(), PromptSetting::FullProfile), &PromptTemplate::default()).unwrap_err();
        assert!(matches!(&e, GenError::MissingProfileField { field, .. } if field == "occupation"));
        assert!(build_prompt(&job(p, PromptSetting::RaceAgeGender), &PromptTemplate::default()).is_ok());
        let t = PromptTemplate { include_income: true, ..PromptTemplate::default() };
        let e = build_prompt(&job(full_profile("a"), PromptSetting::FullProfile), &t).unwrap_err();
        assert!(matches!(&e, GenError::MissingProfileField { field, .. } if field == "income"));
    }

    #[test]
    fn cardinality() {
        let profiles = vec![full_profile("a"), full_profile("b")];
        let jobs = plan_jobs(&profiles, &PromptSetting::ALL, &["m".into()], 1.0).unwrap();
        assert_eq!(jobs.len(), 48);
        assert_eq!(expected_cardinality(126, 4, 3), 9072);
        assert!(matches!(
            plan_jobs(&[full_profile("a"), full_profile("a")], &PromptSetting::ALL, &["m".into()], 1.0),
            Err(GenError::DuplicateJob(_))
        ));
    }

    #[test]
    fn profiles_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        std::fs::write(
            &path,
            "{\"race\":\"asian\",\"gender\":\"male\",\"age_band\":\"25-29\"}\n\n{\"id\":\"x\",\"race\":\"white\",\"gender\":\"female\",\"age_band\":\"30-34\",\"income\":\"$50k\"}\n",
        )
        .unwrap();
        let ps = load_profiles(&path).unwrap();
        assert_eq!(ps[0].id, "P001");
        assert_eq!(ps[1].id, "x");
        assert_eq!(ps[1].income.as_deref(), Some("$50k"));
        std::fs::write(&path, "{\"race\":\"asian\"}\n").unwrap();
        assert!(matches!(load_profiles(&path), Err(GenError::Profile { line: 1, .. })));
    }

    fn arb_profile() -> impl Strategy<Value = GenerationProfile> {
        (0usize..7, 0usize..3, 0usize..11, "[A-Z][a-z]{2,8}( [A-Z][a-z]{2,8})?", "[A-Z][a-z]{3,9}").prop_map(
            |(r, g, a, occ, nat)| {
                let mut p = full_profile("p");
                p.profile.race = Race::ALL[r];
                p.profile.gender = [Gender::Female, Gender::Male, Gender::NonBinary][g].clone();
                p.profile.age_band = crate::corpus::AgeBand::new(crate::corpus::SURVEY_AGE_BANDS[a]).unwrap();
                p.profile.occupation = Some(occ);
                p.profile.nationality = Some(nat);
                p
            },
        )
    }

    proptest! {
        #[test]
        fn lesser_settings_are_token_subsets(p in arb_profile()) {
            let t = PromptTemplate::default();
            let toks = |s: PromptSetting| -> BTreeSet<String> {
                tokenize(&t.persona_clause(&job(p.clone(), s)).unwrap(), &TokenizerConfig::raw()).into_iter().collect()
            };
            let full = toks(PromptSetting::FullProfile);
            for s in [PromptSetting::RaceOnly, PromptSetting::RaceAge, PromptSetting::RaceAgeGender] {
                prop_assert!(toks(s).is_subset(&full), "{:?}", s);
            }
        }
    }
}
