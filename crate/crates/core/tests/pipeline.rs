use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use persona_audit::audit::{fingerprint, run_audit, AuditConfig, ErrorKind, TestOutcome};
use persona_audit::corpus::{load_corpus, save_corpus, CorpusFormat, GroupKey, PromptSetting, Race, SourceClass};
use persona_audit::creativity::AggregationMode;
use persona_audit::genharness::{
    expected_cardinality, load_profiles, plan_jobs, run_batch, BatchLimits, ChatProvider, GenError, Journal,
    PromptTemplate, StubProvider,
};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let audit = fixtures().join("audit");
    let text = format!(
        "seed = 5\n[corpus]\nhuman = \"{}\"\nsynthetic = \"{}\"\n[stats]\nresamples = 200\n{extra}",
        audit.join("human.jsonl").display(),
        audit.join("synthetic.jsonl").display()
    );
    let path = dir.join("audit.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn config_file_audit_finds_planted_word() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = AuditConfig::load(&write_config(dir.path(), "[output]\ndir = \"out\"\n")).unwrap();
    assert_eq!(cfg.output.dir, dir.path().join("out"));
    let report = run_audit(&cfg).unwrap();
    let hispanic = report
        .markedness
        .iter()
        .find(|m| m.group == GroupKey::race_source(Race::HispanicLatino, SourceClass::Model))
        .unwrap();
    assert_eq!(hispanic.ranked[0].token, "zephyr");
    assert!(hispanic.ranked[0].significant);
    assert!(report.creativity.tests.iter().any(|t| matches!(t.outcome, TestOutcome::Bootstrap(_))));
    assert_eq!(report.checks.iter().find(|c| c.name == "diversity").unwrap().holds, Some(true));
    // Every setting row for the model side, plus the human row.
    assert_eq!(report.creativity.by_setting.len(), 5);
}

#[test]
fn macro_and_micro_agree_on_equal_sized_groups() {
    let dir = tempfile::tempdir().unwrap();
    let micro = run_audit(&AuditConfig::load(&write_config(dir.path(), "")).unwrap()).unwrap();
    let mac =
        run_audit(&AuditConfig::load(&write_config(dir.path(), "[creativity]\naggregation = \"macro\"\n")).unwrap())
            .unwrap();
    assert_ne!(micro.fingerprint, mac.fingerprint);
    for (a, b) in micro.creativity.by_source.iter().zip(&mac.creativity.by_source) {
        assert_eq!(b.aggregation, AggregationMode::Macro);
        // Member groups have equal sizes in the fixture, so the two
        // weightings agree on means.
        assert!((a.complexity_mean - b.complexity_mean).abs() < 1e-12);
        assert!((a.diversity - b.diversity).abs() < 1e-12);
    }
}

#[test]
fn gate_inside_audit_drops_flagged_participants() {
    let dir = tempfile::tempdir().unwrap();
    // Flag one white participant's six answers.
    let scores: BTreeMap<String, f64> = load_corpus(&fixtures().join("audit/human.jsonl"), CorpusFormat::JsonLines)
        .unwrap()
        .iter()
        .map(|d| (d.id.clone(), if d.participant_id() == "white-p0" { 0.99 } else { 0.01 }))
        .collect();
    std::fs::write(dir.path().join("scores.json"), serde_json::to_string(&scores).unwrap()).unwrap();
    let cfg = AuditConfig::load(&write_config(dir.path(), "[gate]\nscores = \"scores.json\"\n")).unwrap();
    let report = run_audit(&cfg).unwrap();
    let gate = report.provenance.gate.as_ref().unwrap();
    assert_eq!((gate.participants_kept, gate.participants_removed, gate.documents_removed), (5, 1, 6));
    let white =
        report.groups.iter().find(|g| g.group == GroupKey::race_source(Race::White, SourceClass::Human)).unwrap();
    assert_eq!(white.documents, 6);

    // Missing ids in a replay file are a data error, not a silent pass.
    let partial: BTreeMap<&String, &f64> = scores.iter().skip(1).collect();
    std::fs::write(dir.path().join("scores.json"), serde_json::to_string(&partial).unwrap()).unwrap();
    assert_eq!(run_audit(&cfg).unwrap_err().kind(), ErrorKind::Data);
}

#[test]
fn fingerprint_tracks_corpus_content() {
    let dir = tempfile::tempdir().unwrap();
    let human = dir.path().join("h.jsonl");
    std::fs::copy(fixtures().join("audit/human.jsonl"), &human).unwrap();
    let cfg = AuditConfig::for_corpora(&human, &fixtures().join("audit/synthetic.jsonl"));
    let before = fingerprint(&cfg).unwrap();
    let mut docs = load_corpus(&human, CorpusFormat::JsonLines).unwrap();
    docs[0].text.push_str(" One more sentence.");
    save_corpus(&human, &docs).unwrap();
    assert_ne!(fingerprint(&cfg).unwrap(), before);
}

#[test]
fn generation_resumes_to_the_same_corpus() {
    let profiles = load_profiles(&fixtures().join("audit/profiles.jsonl")).unwrap();
    let one = &profiles[..1];
    let models = vec!["m".to_owned()];
    let template = PromptTemplate::default();
    let limits = BatchLimits::default();
    let providers = |p: StubProvider| -> BTreeMap<String, Arc<dyn ChatProvider>> {
        [("m".to_owned(), Arc::new(p) as Arc<dyn ChatProvider>)].into()
    };

    let mut jobs = plan_jobs(one, &PromptSetting::ALL, &models, 1.0).unwrap();
    assert_eq!(jobs.len(), expected_cardinality(1, 4, 1));
    let clean = run_batch(&mut jobs, &providers(StubProvider::new("m")), &template, &limits, None).unwrap();
    assert_eq!(clean.documents.len(), 24);

    let dir = tempfile::tempdir().unwrap();
    let jpath = dir.path().join("journal.jsonl");
    let mut jobs = plan_jobs(one, &PromptSetting::ALL, &models, 1.0).unwrap();
    let journal = Journal::open(&jpath).unwrap();
    let first =
        run_batch(&mut jobs, &providers(StubProvider::new("m").with_quota(10)), &template, &limits, Some(&journal));
    assert!(matches!(first, Err(GenError::QuotaExceeded(_))));
    drop(journal);

    let mut jobs = plan_jobs(one, &PromptSetting::ALL, &models, 1.0).unwrap();
    let journal = Journal::open(&jpath).unwrap();
    let resumed = run_batch(&mut jobs, &providers(StubProvider::new("m")), &template, &limits, Some(&journal)).unwrap();
    assert_eq!(resumed.resumed, 10);
    assert_eq!(resumed.documents, clean.documents);
}
