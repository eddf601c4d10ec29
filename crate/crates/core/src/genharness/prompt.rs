use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GenError, GenerationJob};
use crate::corpus::PromptSetting;

const DEFAULT_TEMPLATE: &str = include_str!("../../data/prompt_template.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaClauses {
    pub race_only: String,
    pub race_age: String,
    pub race_age_gender: String,
    pub full_profile: String,
    #[serde(default)]
    pub full_profile_with_income: Option<String>,
}

/// Generation prompt pieces. Attribute slots are written `<name>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub preamble: String,
    pub study_details: String,
    pub task: String,
    pub clauses: PersonaClauses,
    /// Use the income clause for full profiles. Off by default.
    #[serde(default)]
    pub include_income: bool,
}

/// Placeholders each setting must use, exactly.
pub fn required_fields(setting: PromptSetting, income: bool) -> &'static [&'static str] {
    match (setting, income) {
        (PromptSetting::RaceOnly, _) => &["race"],
        (PromptSetting::RaceAge, _) => &["age", "race"],
        (PromptSetting::RaceAgeGender, _) => &["age", "race", "sex"],
        (PromptSetting::FullProfile, false) => &["age", "nationality", "occupation", "race", "relationship", "sex"],
        (PromptSetting::FullProfile, true) => {
            &["age", "income", "nationality", "occupation", "race", "relationship", "sex"]
        }
    }
}

/// Placeholder names in `text`, e.g. `{"age", "race"}`.
pub fn placeholders(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut rest = text;
    while let Some(start) = rest.find('<') {
        let after = &rest[start + 1..];
        match after.find('>') {
            Some(end) if after[..end].chars().all(|c| c.is_ascii_lowercase() || c == '_') && end > 0 => {
                out.insert(after[..end].to_owned());
                rest = &after[end + 1..];
            }
            _ => rest = after,
        }
    }
    out
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::parse(DEFAULT_TEMPLATE).expect("built-in template is valid")
    }
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, GenError> {
        let t: PromptTemplate = toml::from_str(text).map_err(|e| GenError::Template(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, GenError> {
        let text = std::fs::read_to_string(path).map_err(|e| GenError::Template(format!("{}: {e}", path.display())))?;
        PromptTemplate::parse(&text)
    }

    pub fn clause(&self, setting: PromptSetting) -> Result<&str, GenError> {
        Ok(match setting {
            PromptSetting::RaceOnly => &self.clauses.race_only,
            PromptSetting::RaceAge => &self.clauses.race_age,
            PromptSetting::RaceAgeGender => &self.clauses.race_age_gender,
            PromptSetting::FullProfile if self.include_income => self
                .clauses
                .full_profile_with_income
                .as_deref()
                .ok_or_else(|| GenError::Template("include_income is set but no income clause is given".into()))?,
            PromptSetting::FullProfile => &self.clauses.full_profile,
        })
    }

    /// Every clause must use exactly its setting's placeholders.
    pub fn validate(&self) -> Result<(), GenError> {
        for setting in PromptSetting::ALL {
            let found = placeholders(self.clause(setting)?);
            let want: BTreeSet<String> =
                required_fields(setting, self.include_income).iter().map(|s| (*s).to_owned()).collect();
            if found != want {
                return Err(GenError::Template(format!(
                    "{} clause uses placeholders {found:?}, expected {want:?}",
                    setting.code()
                )));
            }
        }
        Ok(())
    }

    /// Attribute values a job supplies, by placeholder name.
    fn value(job: &GenerationJob, field: &str) -> Result<String, GenError> {
        let p = &job.profile.profile;
        let missing = || GenError::MissingProfileField { profile: job.profile.id.clone(), field: field.to_owned() };
        let non_empty = |s: Option<&str>| s.map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned);
        match field {
            "age" => Ok(p.age_band.representative_age().to_string()),
            "race" => Ok(p.race.prompt_label().to_owned()),
            "sex" => non_empty(Some(p.gender.prompt_noun())).ok_or_else(missing),
            "occupation" => non_empty(p.occupation.as_deref()).ok_or_else(missing),
            "nationality" => non_empty(p.nationality.as_deref()).ok_or_else(missing),
            "relationship" => p.relationship.map(|r| r.prompt_label().to_owned()).ok_or_else(missing),
            "income" => non_empty(job.profile.income.as_deref()).ok_or_else(missing),
            other => Err(GenError::Template(format!("unknown placeholder <{other}>"))),
        }
    }

    /// Persona clause with the setting's attributes filled in.
    pub fn persona_clause(&self, job: &GenerationJob) -> Result<String, GenError> {
        let mut out = self.clause(job.setting)?.to_owned();
        for field in required_fields(job.setting, self.include_income) {
            out = out.replace(&format!("<{field}>"), &Self::value(job, field)?);
        }
        Ok(out)
    }

    pub fn build(&self, job: &GenerationJob) -> Result<String, GenError> {
        Ok(format!(
            "{}\n\nStudy Details:\n{}\n\nPersonality Attributes:\n{}\n\nTask:\n{}\n\nQuestion: {}\n",
            self.preamble,
            self.study_details,
            self.persona_clause(job)?,
            self.task,
            job.question.text(),
        ))
    }
}
