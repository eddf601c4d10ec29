use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// The six self-description questions, in survey order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QuestionId {
    Q1,
    Q2,
    Q3,
    Q4,
    Q5,
    Q6,
}

impl QuestionId {
    pub const ALL: [QuestionId; 6] =
        [QuestionId::Q1, QuestionId::Q2, QuestionId::Q3, QuestionId::Q4, QuestionId::Q5, QuestionId::Q6];

    pub fn code(self) -> &'static str {
        match self {
            QuestionId::Q1 => "Q1",
            QuestionId::Q2 => "Q2",
            QuestionId::Q3 => "Q3",
            QuestionId::Q4 => "Q4",
            QuestionId::Q5 => "Q5",
            QuestionId::Q6 => "Q6",
        }
    }

    /// Question wording as shown to survey participants.
    pub fn text(self) -> &'static str {
        match self {
            QuestionId::Q1 => "Please describe yourself.",
            QuestionId::Q2 => "What are your aspirations and goals for your personal life?",
            QuestionId::Q3 => "What are your most defining traits or qualities?",
            QuestionId::Q4 => "Please describe your average day.",
            QuestionId::Q5 => "What are your core values, and how do they guide your decisions?",
            QuestionId::Q6 => "What skills do you excel at, and how do you use them?",
        }
    }
}

impl FromStr for QuestionId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let digits = t.strip_prefix(['Q', 'q']).unwrap_or(t);
        match digits {
            "1" => Ok(QuestionId::Q1),
            "2" => Ok(QuestionId::Q2),
            "3" => Ok(QuestionId::Q3),
            "4" => Ok(QuestionId::Q4),
            "5" => Ok(QuestionId::Q5),
            "6" => Ok(QuestionId::Q6),
            _ => Err(format!("`{s}` is not one of Q1..Q6")),
        }
    }
}

/// Census-derived race/ethnicity categories used for stratification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Race {
    AfricanAmericanBlack,
    AmericanIndianAlaskaNative,
    Asian,
    HispanicLatino,
    NativeHawaiianPacificIslander,
    White,
    MultiracialOther,
}

impl Race {
    pub const ALL: [Race; 7] = [
        Race::AfricanAmericanBlack,
        Race::AmericanIndianAlaskaNative,
        Race::Asian,
        Race::HispanicLatino,
        Race::NativeHawaiianPacificIslander,
        Race::White,
        Race::MultiracialOther,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Race::AfricanAmericanBlack => "african_american_black",
            Race::AmericanIndianAlaskaNative => "american_indian_alaska_native",
            Race::Asian => "asian",
            Race::HispanicLatino => "hispanic_latino",
            Race::NativeHawaiianPacificIslander => "native_hawaiian_pacific_islander",
            Race::White => "white",
            Race::MultiracialOther => "multiracial_other",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Race::AfricanAmericanBlack => "African American/Black",
            Race::AmericanIndianAlaskaNative => "American Indian/Alaska Native",
            Race::Asian => "Asian",
            Race::HispanicLatino => "Hispanic/Latino",
            Race::NativeHawaiianPacificIslander => "Native Hawaiian/Pacific Islander",
            Race::White => "White",
            Race::MultiracialOther => "Multiracial/Other",
        }
    }

    /// Wording used inside generation prompts.
    pub fn prompt_label(self) -> &'static str {
        match self {
            Race::AfricanAmericanBlack => "African American",
            Race::AmericanIndianAlaskaNative => "American Indian or Alaska Native",
            Race::Asian => "Asian",
            Race::HispanicLatino => "Hispanic or Latino",
            Race::NativeHawaiianPacificIslander => "Native Hawaiian or Pacific Islander",
            Race::White => "White",
            Race::MultiracialOther => "Multiracial",
        }
    }

    /// Lenient parse of survey/export labels. Anything unrecognised maps to
    /// [`Race::MultiracialOther`].
    pub fn parse_lenient(s: &str) -> Race {
        let key: String = s.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect();
        match key.as_str() {
            "africanamericanblack"
            | "africanamericanorblack"
            | "black"
            | "africanamerican"
            | "blackafricanamerican"
            | "blackorafricanamerican" => Race::AfricanAmericanBlack,
            "americanindianalaskanative"
            | "americanindianalaskannative"
            | "americanindianoralaskanative"
            | "americanindianoralaskannative"
            | "americanindian"
            | "alaskanative"
            | "nativeamerican" => Race::AmericanIndianAlaskaNative,
            "asian" | "asianamerican" => Race::Asian,
            "hispaniclatino" | "hispanicorlatino" | "hispanic" | "latino" | "latina" | "latinx" | "latinohispanic" => {
                Race::HispanicLatino
            }
            "nativehawaiianpacificislander"
            | "nativehawaiianorpacificislander"
            | "nativehawaiianorotherpacificislander"
            | "nativehawaiian"
            | "pacificislander" => Race::NativeHawaiianPacificIslander,
            "white" | "caucasian" => Race::White,
            _ => Race::MultiracialOther,
        }
    }
}

impl fmt::Display for Race {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for Race {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for Race {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Race::parse_lenient(&s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Gender {
    Female,
    Male,
    NonBinary,
    Other(String),
}

impl Gender {
    pub fn code(&self) -> &str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::NonBinary => "non_binary",
            Gender::Other(s) => s,
        }
    }

    /// Noun used in the persona clause ("... African American woman").
    pub fn prompt_noun(&self) -> &str {
        match self {
            Gender::Female => "woman",
            Gender::Male => "man",
            Gender::NonBinary => "non-binary person",
            Gender::Other(s) => s,
        }
    }

    pub fn parse(s: &str) -> Gender {
        let key: String = s.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect();
        match key.as_str() {
            "female" | "woman" | "f" => Gender::Female,
            "male" | "man" | "m" => Gender::Male,
            "nonbinary" => Gender::NonBinary,
            _ => Gender::Other(s.trim().to_owned()),
        }
    }
}

impl Serialize for Gender {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for Gender {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Gender::parse(&String::deserialize(d)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relationship {
    NeverMarried,
    Separated,
    Divorced,
    Widowed,
    Married,
}

impl Relationship {
    pub fn code(self) -> &'static str {
        match self {
            Relationship::NeverMarried => "never_married",
            Relationship::Separated => "separated",
            Relationship::Divorced => "divorced",
            Relationship::Widowed => "widowed",
            Relationship::Married => "married",
        }
    }

    pub fn prompt_label(self) -> &'static str {
        match self {
            Relationship::NeverMarried => "never married",
            Relationship::Separated => "separated",
            Relationship::Divorced => "divorced",
            Relationship::Widowed => "widowed",
            Relationship::Married => "married",
        }
    }
}

impl FromStr for Relationship {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect();
        match key.as_str() {
            "nevermarried" | "single" => Ok(Relationship::NeverMarried),
            "separated" => Ok(Relationship::Separated),
            "divorced" => Ok(Relationship::Divorced),
            "widowed" => Ok(Relationship::Widowed),
            "married" => Ok(Relationship::Married),
            _ => Err(format!("unknown relationship status `{s}`")),
        }
    }
}

/// How much of the profile a generation prompt discloses. Ordered by
/// information content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptSetting {
    RaceOnly,
    RaceAge,
    RaceAgeGender,
    FullProfile,
}

impl PromptSetting {
    pub const ALL: [PromptSetting; 4] =
        [PromptSetting::RaceOnly, PromptSetting::RaceAge, PromptSetting::RaceAgeGender, PromptSetting::FullProfile];

    pub fn code(self) -> &'static str {
        match self {
            PromptSetting::RaceOnly => "race_only",
            PromptSetting::RaceAge => "race_age",
            PromptSetting::RaceAgeGender => "race_age_gender",
            PromptSetting::FullProfile => "full_profile",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PromptSetting::RaceOnly => "Race",
            PromptSetting::RaceAge => "Race+Age",
            PromptSetting::RaceAgeGender => "Race+Age+Gender",
            PromptSetting::FullProfile => "Full profile",
        }
    }
}

impl FromStr for PromptSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect();
        match key.as_str() {
            "raceonly" | "race" => Ok(PromptSetting::RaceOnly),
            "raceage" | "agerace" => Ok(PromptSetting::RaceAge),
            "raceagegender" | "agesexrace" | "raceagesex" | "agegenderrace" => Ok(PromptSetting::RaceAgeGender),
            "fullprofile" | "full" | "all" => Ok(PromptSetting::FullProfile),
            _ => Err(format!("unknown prompt setting `{s}`")),
        }
    }
}

/// Who wrote a document.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    Human,
    Model(String),
}

/// Source with the model name erased, for human-vs-model stratification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceClass {
    Human,
    Model,
}

impl SourceClass {
    pub fn code(self) -> &'static str {
        match self {
            SourceClass::Human => "human",
            SourceClass::Model => "model",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SourceClass::Human => "Human",
            SourceClass::Model => "LLM",
        }
    }
}

impl Source {
    pub fn class(&self) -> SourceClass {
        match self {
            Source::Human => SourceClass::Human,
            Source::Model(_) => SourceClass::Model,
        }
    }

    pub fn model_name(&self) -> Option<&str> {
        match self {
            Source::Human => None,
            Source::Model(m) => Some(m),
        }
    }
}

/// Age bands offered by the survey. The survey list contains the bands
/// `34-39` and `54-59` as printed; the arithmetic spellings `35-39` and
/// `55-59` are accepted too.
pub const SURVEY_AGE_BANDS: [&str; 13] = [
    "less than 20",
    "20-24",
    "25-29",
    "30-34",
    "34-39",
    "35-39",
    "40-44",
    "45-49",
    "50-54",
    "54-59",
    "55-59",
    "60-64",
    "65 and older",
];

/// A survey age band such as `50-54`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AgeBand(String);

impl AgeBand {
    pub fn new(s: &str) -> Result<Self, String> {
        let t = s.trim();
        SURVEY_AGE_BANDS
            .iter()
            .find(|b| b.eq_ignore_ascii_case(t))
            .map(|b| AgeBand((*b).to_owned()))
            .ok_or_else(|| format!("`{s}` is not a survey age band"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Representative whole-year age: the floored band midpoint, 18 for the
    /// open lower band (respondents are adults) and 70 for `65 and older`.
    pub fn representative_age(&self) -> u32 {
        match self.0.as_str() {
            "less than 20" => 18,
            "65 and older" => 70,
            band => {
                let (lo, hi) = band.split_once('-').expect("validated band");
                let lo: u32 = lo.parse().expect("validated band");
                let hi: u32 = hi.parse().expect("validated band");
                (lo + hi) / 2
            }
        }
    }
}

impl TryFrom<String> for AgeBand {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        AgeBand::new(&s)
    }
}

impl From<AgeBand> for String {
    fn from(b: AgeBand) -> String {
        b.0
    }
}

impl fmt::Display for AgeBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorProfile {
    pub race: Race,
    pub gender: Gender,
    pub age_band: AgeBand,
    #[serde(default)]
    pub occupation: Option<String>,
    #[serde(default)]
    pub nationality: Option<String>,
    #[serde(default)]
    pub relationship: Option<Relationship>,
}

impl AuthorProfile {
    /// Minimal profile. Panics if `age_band` is not a survey band; meant for
    /// fixtures and tests.
    pub fn new(race: Race, gender: Gender, age_band: &str) -> Self {
        AuthorProfile {
            race,
            gender,
            age_band: AgeBand::new(age_band).expect("valid age band"),
            occupation: None,
            nationality: None,
            relationship: None,
        }
    }
}

/// One answer text plus the metadata needed to stratify it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonaDocument {
    pub id: String,
    pub text: String,
    pub question: QuestionId,
    pub source: Source,
    /// Present exactly when `source` is a model.
    pub prompt_setting: Option<PromptSetting>,
    pub profile: AuthorProfile,
    /// Survey respondent this answer belongs to, when known.
    pub participant: Option<String>,
}

impl PersonaDocument {
    /// Participant used for gating and per-participant aggregation. Falls
    /// back to the document id when no participant is recorded.
    pub fn participant_id(&self) -> &str {
        self.participant.as_deref().unwrap_or(&self.id)
    }
}
