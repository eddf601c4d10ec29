use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::AuditError;
use crate::corpus::GroupKey;
use crate::creativity::{CreativityOptions, CreativityScores};
use crate::markedness::MarkedWordReport;
use crate::stats::{BootstrapResult, WelchResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub human_sha256: String,
    pub synthetic_sha256: String,
    pub human_documents: usize,
    pub synthetic_documents: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSummary {
    pub scorer: String,
    pub threshold: f64,
    pub participants_kept: usize,
    pub participants_removed: usize,
    pub documents_kept: usize,
    pub documents_removed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub seed: u64,
    pub embedding_provider: String,
    pub word_vectors: String,
    pub sentiment_scorers: Vec<String>,
    pub corpus: CorpusSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCount {
    pub group: GroupKey,
    pub documents: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopTerms {
    pub group: GroupKey,
    pub terms: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum TestOutcome {
    Welch(WelchResult),
    Bootstrap(BootstrapResult),
    /// The test could not be run (too few samples, constant data).
    Unavailable {
        reason: String,
    },
}

/// One two-group comparison of a metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: String,
    pub group1: GroupKey,
    pub group2: GroupKey,
    pub outcome: TestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupError {
    pub group: GroupKey,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreativitySection {
    pub options: CreativityOptions,
    /// Race × source groups.
    pub by_group: Vec<CreativityScores>,
    /// Prompt setting × source rows, races combined.
    pub by_setting: Vec<CreativityScores>,
    /// One row per source, races combined.
    pub by_source: Vec<CreativityScores>,
    pub unscored: Vec<GroupError>,
    pub tests: Vec<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentRow {
    pub scorer: String,
    pub group: GroupKey,
    pub mean: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentSection {
    pub per_participant: bool,
    pub rows: Vec<SentimentRow>,
    pub tests: Vec<Comparison>,
}

/// An expected direction of difference, checked on the audited data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionCheck {
    pub name: String,
    pub expectation: String,
    /// `None` when a needed group is missing.
    pub holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub audit_id: String,
    pub fingerprint: String,
    pub provenance: Provenance,
    pub groups: Vec<GroupCount>,
    pub markedness: Vec<MarkedWordReport>,
    pub tfidf: Vec<TopTerms>,
    pub creativity: CreativitySection,
    pub sentiment: SentimentSection,
    pub checks: Vec<DirectionCheck>,
    /// Degenerate cases met along the way, by section.
    pub flags: Vec<String>,
}

fn f(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.4}")
    } else {
        x.to_string()
    }
}

/// Config spelling of a unit enum.
fn code<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::new(),
    }
}

fn p_value(p: f64) -> String {
    if p < 0.001 {
        "< 0.001".into()
    } else {
        format!("{p:.4}")
    }
}

impl TestOutcome {
    fn describe(&self) -> String {
        match self {
            TestOutcome::Welch(w) => format!("t = {}, df = {}, p {}", f(w.t), f(w.df), p_value(w.p_two_sided)),
            TestOutcome::Bootstrap(b) => {
                format!("Δ = {}, 95% CI [{}, {}] ({} resamples)", f(b.estimate), f(b.ci95.0), f(b.ci95.1), b.resamples)
            }
            TestOutcome::Unavailable { reason } => format!("not computed: {reason}"),
        }
    }
}

fn creativity_table(s: &mut String, rows: &[CreativityScores]) {
    s.push_str("| group | n | surprisal | diversity | novelty | complexity |\n|---|---:|---:|---:|---:|---:|\n");
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} |",
            r.group,
            r.n,
            f(r.surprisal_mean),
            f(r.diversity),
            f(r.novelty),
            f(r.complexity_mean)
        );
    }
    s.push('\n');
}

fn tests_table(s: &mut String, tests: &[Comparison]) {
    if tests.is_empty() {
        return;
    }
    s.push_str("| metric | group 1 | group 2 | result |\n|---|---|---|---|\n");
    for t in tests {
        let _ = writeln!(s, "| {} | {} | {} | {} |", t.metric, t.group1, t.group2, t.outcome.describe());
    }
    s.push('\n');
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, AuditError> {
        serde_json::from_str(text).map_err(|e| AuditError::Data(format!("report JSON: {e}")))
    }

    pub fn to_markdown(&self) -> String {
        let p = &self.provenance;
        let mut s = format!("# Persona audit {}\n\n", self.audit_id);
        let _ = writeln!(s, "- fingerprint: `{}`", self.fingerprint);
        let _ = writeln!(s, "- tool version: {}", p.tool_version);
        let _ = writeln!(s, "- seed: {}", p.seed);
        let _ = writeln!(s, "- embedding provider: `{}`", p.embedding_provider);
        let _ = writeln!(s, "- word vectors: {}", p.word_vectors);
        let _ = writeln!(
            s,
            "- corpora: {} human documents (`{}`), {} synthetic documents (`{}`)",
            p.corpus.human_documents,
            &p.corpus.human_sha256[..12],
            p.corpus.synthetic_documents,
            &p.corpus.synthetic_sha256[..12]
        );
        if let Some(g) = &p.gate {
            let _ = writeln!(
                s,
                "- authenticity gate ({}, threshold {}): kept {} participants / {} documents, removed {} / {}",
                g.scorer,
                g.threshold,
                g.participants_kept,
                g.documents_kept,
                g.participants_removed,
                g.documents_removed
            );
        }
        s.push_str("\n## Groups\n\n| group | documents |\n|---|---:|\n");
        for g in &self.groups {
            let _ = writeln!(s, "| {} | {} |", g.group, g.documents);
        }

        s.push_str("\n## Marked words (log-odds, informative prior)\n\n");
        if self.markedness.is_empty() {
            s.push_str("No comparisons: the reference group is missing.\n\n");
        }
        for m in &self.markedness {
            s.push_str(&m.to_markdown());
            s.push('\n');
        }

        s.push_str("## Top TF-IDF terms\n\n| group | terms |\n|---|---|\n");
        for t in &self.tfidf {
            let terms: Vec<String> = t.terms.iter().map(|(w, sc)| format!("{w} ({sc:.3})")).collect();
            let _ = writeln!(s, "| {} | {} |", t.group, terms.join(", "));
        }

        let c = &self.creativity;
        let _ = write!(
            s,
            "\n## Creativity\n\nNovelty baseline: {}; combined rows: {}; question scope: {}.\n\n### By group\n\n",
            code(&c.options.novelty_scope),
            code(&c.options.aggregation),
            code(&c.options.question_scope)
        );
        creativity_table(&mut s, &c.by_group);
        s.push_str("### By prompt setting\n\n");
        creativity_table(&mut s, &c.by_setting);
        s.push_str("### By source\n\n");
        creativity_table(&mut s, &c.by_source);
        for u in &c.unscored {
            let _ = writeln!(s, "- {} not scored: {}", u.group, u.error);
        }
        if !c.unscored.is_empty() {
            s.push('\n');
        }
        s.push_str("### Tests\n\n");
        tests_table(&mut s, &c.tests);

        let _ = write!(
            s,
            "## Sentiment\n\nUnit: {}.\n\n| scorer | group | mean | n |\n|---|---|---:|---:|\n",
            if self.sentiment.per_participant { "participant" } else { "document" }
        );
        for r in &self.sentiment.rows {
            let _ = writeln!(s, "| {} | {} | {} | {} |", r.scorer, r.group, f(r.mean), r.n);
        }
        s.push('\n');
        tests_table(&mut s, &self.sentiment.tests);

        s.push_str("## Direction checks\n\n");
        for ch in &self.checks {
            let mark = match ch.holds {
                Some(true) => "holds",
                Some(false) => "does not hold",
                None => "not evaluated",
            };
            let _ = writeln!(s, "- {}: {} ({mark})", ch.name, ch.expectation);
        }
        if !self.flags.is_empty() {
            s.push_str("\n## Flags\n\n");
            for fl in &self.flags {
                let _ = writeln!(s, "- {fl}");
            }
        }
        s
    }

    fn csv_tables(&self) -> Result<Vec<(&'static str, Vec<u8>)>, csv::Error> {
        let fp = self.fingerprint.as_str();
        let mut out = Vec::new();

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["fingerprint", "group", "reference", "rank", "token", "delta", "significant", "tag"])?;
        for m in &self.markedness {
            for (i, r) in m.ranked.iter().enumerate() {
                w.write_record([
                    fp,
                    &m.group.slug(),
                    &m.reference.slug(),
                    &(i + 1).to_string(),
                    &r.token,
                    &r.delta.to_string(),
                    &r.significant.to_string(),
                    m.tags.get(&r.token).map(String::as_str).unwrap_or(""),
                ])?;
            }
        }
        out.push(("marked_words.csv", w.into_inner().map_err(|e| e.into_error())?));

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["fingerprint", "group", "rank", "token", "score"])?;
        for t in &self.tfidf {
            for (i, (tok, sc)) in t.terms.iter().enumerate() {
                w.write_record([fp, &t.group.slug(), &(i + 1).to_string(), tok, &sc.to_string()])?;
            }
        }
        out.push(("tfidf_top_terms.csv", w.into_inner().map_err(|e| e.into_error())?));

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["fingerprint", "table", "group", "aggregation", "n", "metric", "value"])?;
        let c = &self.creativity;
        for (table, rows) in [("group", &c.by_group), ("setting", &c.by_setting), ("source", &c.by_source)] {
            for r in rows {
                let agg = code(&r.aggregation);
                for (metric, v) in [
                    ("surprisal", r.surprisal_mean),
                    ("diversity", r.diversity),
                    ("novelty", r.novelty),
                    ("complexity", r.complexity_mean),
                ] {
                    w.write_record([fp, table, &r.group.slug(), &agg, &r.n.to_string(), metric, &v.to_string()])?;
                }
            }
        }
        out.push(("creativity.csv", w.into_inner().map_err(|e| e.into_error())?));

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["fingerprint", "scorer", "group", "mean", "n"])?;
        for r in &self.sentiment.rows {
            w.write_record([fp, &r.scorer, &r.group.slug(), &r.mean.to_string(), &r.n.to_string()])?;
        }
        out.push(("sentiment.csv", w.into_inner().map_err(|e| e.into_error())?));

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "fingerprint",
            "section",
            "metric",
            "group1",
            "group2",
            "method",
            "statistic",
            "df",
            "p",
            "ci_low",
            "ci_high",
        ])?;
        for (section, tests) in [("creativity", &c.tests), ("sentiment", &self.sentiment.tests)] {
            for t in tests {
                let (method, stat, df, p, lo, hi) = match &t.outcome {
                    TestOutcome::Welch(r) => (
                        "welch",
                        r.t.to_string(),
                        r.df.to_string(),
                        r.p_two_sided.to_string(),
                        String::new(),
                        String::new(),
                    ),
                    TestOutcome::Bootstrap(b) => (
                        "bootstrap",
                        b.estimate.to_string(),
                        String::new(),
                        String::new(),
                        b.ci95.0.to_string(),
                        b.ci95.1.to_string(),
                    ),
                    TestOutcome::Unavailable { .. } => {
                        ("unavailable", String::new(), String::new(), String::new(), String::new(), String::new())
                    }
                };
                w.write_record([
                    fp,
                    section,
                    &t.metric,
                    &t.group1.slug(),
                    &t.group2.slug(),
                    method,
                    &stat,
                    &df,
                    &p,
                    &lo,
                    &hi,
                ])?;
            }
        }
        out.push(("tests.csv", w.into_inner().map_err(|e| e.into_error())?));
        Ok(out)
    }

    /// Tidy long-format rows for charting: per-setting creativity (one line
    /// per setting and metric) and per-race creativity.
    fn plot_tables(&self) -> Result<Vec<(&'static str, Vec<u8>)>, csv::Error> {
        let mut out = Vec::new();
        for (name, rows) in [
            ("creativity_by_setting.csv", &self.creativity.by_setting),
            ("creativity_by_race.csv", &self.creativity.by_group),
        ] {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["source", "setting", "race", "metric", "value"])?;
            for r in rows {
                let g = &r.group;
                for (metric, v) in [
                    ("surprisal", r.surprisal_mean),
                    ("diversity", r.diversity),
                    ("novelty", r.novelty),
                    ("complexity", r.complexity_mean),
                ] {
                    w.write_record([
                        g.source.map(|s| s.label()).unwrap_or(""),
                        g.setting.map(|s| s.label()).unwrap_or(""),
                        g.race.map(|r| r.label()).unwrap_or(""),
                        metric,
                        &v.to_string(),
                    ])?;
                }
            }
            out.push((name, w.into_inner().map_err(|e| e.into_error())?));
        }
        Ok(out)
    }

    /// Write `report.json`, `report.md` and `tables/*.csv` under `dir`, plus
    /// `plot/*.csv` when asked. Returns the files written.
    pub fn write(&self, dir: &Path, plot_data: bool) -> Result<Vec<PathBuf>, AuditError> {
        let io = |p: &Path, e: std::io::Error| AuditError::Io(format!("{}: {e}", p.display()));
        let mut written = Vec::new();
        let mut put = |path: PathBuf, bytes: &[u8]| -> Result<(), AuditError> {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
            }
            std::fs::write(&path, bytes).map_err(|e| io(&path, e))?;
            written.push(path);
            Ok(())
        };
        put(dir.join("report.json"), self.to_json().as_bytes())?;
        put(dir.join("report.md"), self.to_markdown().as_bytes())?;
        let csv_err = |e: csv::Error| AuditError::Io(format!("writing CSV: {e}"));
        for (name, bytes) in self.csv_tables().map_err(csv_err)? {
            put(dir.join("tables").join(name), &bytes)?;
        }
        if plot_data {
            for (name, bytes) in self.plot_tables().map_err(csv_err)? {
                put(dir.join("plot").join(name), &bytes)?;
            }
        }
        Ok(written)
    }
}
