use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::types::{
    AgeBand, AuthorProfile, Gender, PersonaDocument, PromptSetting, QuestionId, Race, Relationship, Source,
};
use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    JsonLines,
    Csv,
}

impl CorpusFormat {
    /// Guess from the file extension; `.csv` is CSV, everything else JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::JsonLines,
        }
    }
}

/// On-disk row. Field order here is the serialized key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub id: String,
    pub text: String,
    pub question: String,
    pub source: String,
    pub model: Option<String>,
    pub prompt_setting: Option<String>,
    pub race: String,
    pub gender: String,
    pub age_band: String,
    pub occupation: Option<String>,
    pub nationality: Option<String>,
    pub relationship: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participant: Option<String>,
}

impl From<&PersonaDocument> for DocumentRecord {
    fn from(d: &PersonaDocument) -> Self {
        DocumentRecord {
            id: d.id.clone(),
            text: d.text.clone(),
            question: d.question.code().to_owned(),
            source: d.source.class().code().to_owned(),
            model: d.source.model_name().map(str::to_owned),
            prompt_setting: d.prompt_setting.map(|s| s.code().to_owned()),
            race: d.profile.race.code().to_owned(),
            gender: d.profile.gender.code().to_owned(),
            age_band: d.profile.age_band.as_str().to_owned(),
            occupation: d.profile.occupation.clone(),
            nationality: d.profile.nationality.clone(),
            relationship: d.profile.relationship.map(|r| r.code().to_owned()),
            participant: d.participant.clone(),
        }
    }
}

/// Field access shared by the JSONL and CSV readers.
type FieldGetter = Box<dyn Fn(&str) -> Result<Option<String>, CorpusError>>;

struct RawRecord {
    line: usize,
    get: FieldGetter,
}

impl RawRecord {
    fn optional(&self, field: &'static str) -> Result<Option<String>, CorpusError> {
        Ok((self.get)(field)?.filter(|s| !s.trim().is_empty()))
    }

    fn required(&self, field: &'static str) -> Result<String, CorpusError> {
        self.optional(field)?.ok_or_else(|| CorpusError::validation(self.line, field, "missing or empty"))
    }

    fn into_document(self) -> Result<PersonaDocument, CorpusError> {
        let line = self.line;
        let id = self.required("id")?;
        let text = self.required("text")?;
        let question = QuestionId::from_str(&self.required("question")?)
            .map_err(|m| CorpusError::validation(line, "question", m))?;
        let source_raw = self.required("source")?;
        let model = self.optional("model")?;
        let source = match source_raw.trim().to_ascii_lowercase().as_str() {
            "human" => {
                if model.is_some() {
                    return Err(CorpusError::validation(line, "model", "must be null for human documents"));
                }
                Source::Human
            }
            "model" | "llm" => Source::Model(
                model.ok_or_else(|| CorpusError::validation(line, "model", "required for model documents"))?,
            ),
            other => {
                return Err(CorpusError::validation(
                    line,
                    "source",
                    format!("expected `human` or `model`, got `{other}`"),
                ))
            }
        };
        let prompt_setting = self
            .optional("prompt_setting")?
            .map(|s| PromptSetting::from_str(&s))
            .transpose()
            .map_err(|m| CorpusError::validation(line, "prompt_setting", m))?;
        match (&source, prompt_setting) {
            (Source::Human, Some(_)) => {
                return Err(CorpusError::validation(line, "prompt_setting", "must be null for human documents"))
            }
            (Source::Model(_), None) => {
                return Err(CorpusError::validation(line, "prompt_setting", "required for model documents"))
            }
            _ => {}
        }
        let race = Race::parse_lenient(&self.required("race")?);
        let gender = Gender::parse(&self.required("gender")?);
        let age_band =
            AgeBand::new(&self.required("age_band")?).map_err(|m| CorpusError::validation(line, "age_band", m))?;
        let relationship = self
            .optional("relationship")?
            .map(|s| Relationship::from_str(&s))
            .transpose()
            .map_err(|m| CorpusError::validation(line, "relationship", m))?;
        Ok(PersonaDocument {
            id,
            text,
            question,
            source,
            prompt_setting,
            profile: AuthorProfile {
                race,
                gender,
                age_band,
                occupation: self.optional("occupation")?,
                nationality: self.optional("nationality")?,
                relationship,
            },
            participant: self.optional("participant")?,
        })
    }
}

fn value_as_string(line: usize, field: &'static str, v: Option<&Value>) -> Result<Option<String>, CorpusError> {
    match v {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(Value::Number(n)) => Ok(Some(n.to_string())),
        Some(other) => Err(CorpusError::validation(line, field, format!("expected a string, got {other}"))),
    }
}

fn field_name(field: &str) -> &'static str {
    const FIELDS: [&str; 13] = [
        "id",
        "text",
        "question",
        "source",
        "model",
        "prompt_setting",
        "race",
        "gender",
        "age_band",
        "occupation",
        "nationality",
        "relationship",
        "participant",
    ];
    FIELDS.iter().find(|f| **f == field).copied().unwrap_or("unknown")
}

fn check_unique(docs: &[PersonaDocument], lines: &[usize]) -> Result<(), CorpusError> {
    let mut seen = HashSet::with_capacity(docs.len());
    for (d, line) in docs.iter().zip(lines) {
        if !seen.insert(d.id.as_str()) {
            return Err(CorpusError::validation(*line, "id", format!("duplicate id `{}`", d.id)));
        }
    }
    Ok(())
}

/// Read and validate a corpus from any reader.
pub fn read_corpus<R: Read>(reader: R, format: CorpusFormat) -> Result<Vec<PersonaDocument>, CorpusError> {
    let mut docs = Vec::new();
    let mut lines = Vec::new();
    match format {
        CorpusFormat::JsonLines => {
            for (i, line) in BufReader::new(reader).lines().enumerate() {
                let lineno = i + 1;
                let line = line.map_err(|e| CorpusError::Parse { line: lineno, message: e.to_string() })?;
                if line.trim().is_empty() {
                    continue;
                }
                let obj: Map<String, Value> = serde_json::from_str(&line)
                    .map_err(|e| CorpusError::Parse { line: lineno, message: e.to_string() })?;
                let raw = RawRecord {
                    line: lineno,
                    get: Box::new(move |f| value_as_string(lineno, field_name(f), obj.get(f))),
                };
                docs.push(raw.into_document()?);
                lines.push(lineno);
            }
        }
        CorpusFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
            let headers = rdr.headers().map_err(|e| CorpusError::Parse { line: 1, message: e.to_string() })?.clone();
            for (i, rec) in rdr.records().enumerate() {
                let lineno = rec.as_ref().ok().and_then(|r| r.position()).map(|p| p.line() as usize).unwrap_or(i + 2);
                let rec = rec.map_err(|e| CorpusError::Parse { line: lineno, message: e.to_string() })?;
                let headers = headers.clone();
                let raw = RawRecord {
                    line: lineno,
                    get: Box::new(move |f| {
                        Ok(headers.iter().position(|h| h.trim() == f).and_then(|i| rec.get(i)).map(str::to_owned))
                    }),
                };
                docs.push(raw.into_document()?);
                lines.push(lineno);
            }
        }
    }
    check_unique(&docs, &lines)?;
    Ok(docs)
}

/// Load a corpus file. The returned documents satisfy every
/// [`PersonaDocument`] invariant and carry unique ids.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<PersonaDocument>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    read_corpus(file, format)
}

pub fn write_corpus<W: Write>(mut w: W, docs: &[PersonaDocument]) -> std::io::Result<()> {
    for d in docs {
        serde_json::to_writer(&mut w, &DocumentRecord::from(d))?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Save as JSON Lines.
pub fn save_corpus(path: &Path, docs: &[PersonaDocument]) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io { path: path.display().to_string(), source };
    let file = File::create(path).map_err(io_err)?;
    write_corpus(BufWriter::new(file), docs).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Gender, SourceClass};
    use proptest::prelude::*;

    const HUMAN: &str = r#"{"id":"h1","text":"I like to run.","question":"Q1","source":"human","model":null,"prompt_setting":null,"race":"White","gender":"Female","age_band":"30-34","occupation":null,"nationality":null,"relationship":null}"#;

    fn read(s: &str) -> Result<Vec<PersonaDocument>, CorpusError> {
        read_corpus(s.as_bytes(), CorpusFormat::JsonLines)
    }

    #[test]
    fn empty_file_gives_no_documents() {
        assert!(read("").unwrap().is_empty());
        assert!(read("\n\n").unwrap().is_empty());
    }

    #[test]
    fn missing_text_names_the_field() {
        let line = HUMAN.replace(r#""text":"I like to run.","#, "");
        match read(&line) {
            Err(CorpusError::Validation { field, line, .. }) => {
                assert_eq!(field, "text");
                assert_eq!(line, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        let blank = HUMAN.replace("I like to run.", "   ");
        assert!(matches!(read(&blank), Err(CorpusError::Validation { field: "text", .. })));
    }

    #[test]
    fn malformed_json_reports_line() {
        let input = format!("{HUMAN}\n{{not json\n");
        assert!(matches!(read(&input), Err(CorpusError::Parse { line: 2, .. })));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let input = format!("{HUMAN}\n{HUMAN}\n");
        assert!(matches!(read(&input), Err(CorpusError::Validation { field: "id", line: 2, .. })));
    }

    #[test]
    fn setting_presence_tracks_source() {
        let bad = HUMAN.replace(r#""prompt_setting":null"#, r#""prompt_setting":"race_only""#);
        assert!(matches!(read(&bad), Err(CorpusError::Validation { field: "prompt_setting", .. })));
        let model = HUMAN.replace(r#""source":"human","model":null"#, r#""source":"model","model":"gpt-4o""#);
        assert!(matches!(read(&model), Err(CorpusError::Validation { field: "prompt_setting", .. })));
        let ok = model.replace(r#""prompt_setting":null"#, r#""prompt_setting":"full_profile""#);
        let docs = read(&ok).unwrap();
        assert_eq!(docs[0].source.class(), SourceClass::Model);
        assert_eq!(docs[0].prompt_setting, Some(PromptSetting::FullProfile));
    }

    #[test]
    fn question_outside_set_rejected() {
        let bad = HUMAN.replace(r#""question":"Q1""#, r#""question":"Q9""#);
        assert!(matches!(read(&bad), Err(CorpusError::Validation { field: "question", .. })));
    }

    #[test]
    fn csv_reads_survey_export() {
        let csv =
            "id,text,question,source,model,prompt_setting,race,gender,age_band,occupation,nationality,relationship\n\
                   p1-q1,\"Hello, world.\",1,human,,,Hispanic or Latino,Male,20-24,Nurse,Mexico,Never Married\n";
        let docs = read_corpus(csv.as_bytes(), CorpusFormat::Csv).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].profile.race, Race::HispanicLatino);
        assert_eq!(docs[0].profile.gender, Gender::Male);
        assert_eq!(docs[0].profile.relationship, Some(Relationship::NeverMarried));
        assert_eq!(docs[0].text, "Hello, world.");
    }

    fn arb_doc() -> impl Strategy<Value = PersonaDocument> {
        (
            "[a-z]{1,8}",
            "[A-Za-z ,.!'\"é]{0,40}[a-z]",
            0usize..6,
            prop::option::of("[a-z0-9-]{1,10}"),
            0usize..4,
            0usize..7,
            0usize..4,
            0usize..SURVEY_AGE_BANDS_LEN,
            prop::option::of("[A-Za-z ]{1,12}[a-z]"),
            prop::option::of(0usize..5),
        )
            .prop_map(|(id, text, q, model, s, r, g, a, occ, rel)| PersonaDocument {
                id,
                text,
                question: QuestionId::ALL[q],
                prompt_setting: model.as_ref().map(|_| PromptSetting::ALL[s]),
                source: model.map(Source::Model).unwrap_or(Source::Human),
                profile: AuthorProfile {
                    race: Race::ALL[r],
                    gender: [Gender::Female, Gender::Male, Gender::NonBinary, Gender::Other("agender".into())][g]
                        .clone(),
                    age_band: AgeBand::new(crate::corpus::SURVEY_AGE_BANDS[a]).unwrap(),
                    occupation: occ.clone(),
                    nationality: occ,
                    relationship: rel.map(|i| {
                        [
                            Relationship::NeverMarried,
                            Relationship::Separated,
                            Relationship::Divorced,
                            Relationship::Widowed,
                            Relationship::Married,
                        ][i]
                    }),
                },
                participant: None,
            })
    }

    const SURVEY_AGE_BANDS_LEN: usize = crate::corpus::SURVEY_AGE_BANDS.len();

    proptest! {
        #[test]
        fn save_then_load_round_trips(docs in prop::collection::vec(arb_doc(), 0..12)) {
            let mut seen = HashSet::new();
            let docs: Vec<_> = docs.into_iter().filter(|d| seen.insert(d.id.clone())).collect();
            let mut buf = Vec::new();
            write_corpus(&mut buf, &docs).unwrap();
            let back = read_corpus(buf.as_slice(), CorpusFormat::JsonLines).unwrap();
            prop_assert_eq!(back, docs);
        }
    }
}
