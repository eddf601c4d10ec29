//! End-to-end audit: load both corpora, optionally gate the human one, run
//! every metric over the race × source stratification and assemble a
//! deterministic report.

mod config;
mod report;

pub use config::{
    AuditConfig, CorpusPaths, EmbeddingBackend, EmbeddingConfig, ExternalScorerConfig, GateConfig, MarkednessConfig,
    OutputConfig, SentimentConfig, StatsConfig, TextConfig, TfIdfConfig, WordsConfig,
};
pub use report::{
    Comparison, CorpusSummary, CreativitySection, DirectionCheck, GateSummary, GroupCount, GroupError, MetricReport,
    Provenance, SentimentRow, SentimentSection, TestOutcome, TopTerms,
};

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::corpus::{
    gate_authenticity, group_by_participant, load_corpus, partition, AuthenticityScorer, CorpusError, CorpusFormat,
    GateError, GateOptions, GroupKey, GroupSchema, HttpScorer, Partition, PersonaDocument, PromptSetting, Race,
    SourceClass, StubScorer,
};
use crate::creativity::{
    aggregate, embed_stories, group_creativity, CreativityError, CreativityScores, GroupCreativity, GroupSamples,
};
use crate::digest::{file_sha256, sha256_hex};
use crate::embedding::{
    EmbeddingCache, EmbeddingError, EmbeddingProvider, HashEmbedder, ServiceEmbedder, ServiceOptions, VectorStore,
    WordEmbeddingModel,
};
use crate::markedness::{marked_words, MarkednessError, TagLexicon};
use crate::numeric::compensated_sum;
use crate::par;
use crate::sentiment::{
    group_sentiment, score_lexicon, ExternalScorer, HttpClassifier, SentimentError, SentimentLexicon, SentimentScore,
};
use crate::stats::{bootstrap_diff, welch_t, Statistic};
use crate::textproc::{pseudo_documents, tfidf, tokenize, top_terms, StopWords, TextError, TokenizerConfig};

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Markedness(#[from] MarkednessError),
    #[error(transparent)]
    Creativity(#[from] CreativityError),
    #[error(transparent)]
    Sentiment(#[from] SentimentError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Io(String),
}

/// Coarse failure class, mapped to process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Provider,
    Data,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Provider => 3,
            ErrorKind::Data => 4,
        }
    }
}

impl AuditError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            AuditError::Config(_) => ErrorKind::Config,
            AuditError::Gate(GateError::ScorerUnavailable { .. })
            | AuditError::Embedding(EmbeddingError::ProviderUnavailable(_))
            | AuditError::Creativity(CreativityError::Embedding(EmbeddingError::ProviderUnavailable(_)))
            | AuditError::Sentiment(SentimentError::ProviderUnavailable(_) | SentimentError::MalformedResponse(_)) => {
                ErrorKind::Provider
            }
            AuditError::Gate(GateError::InvalidThreshold(_))
            | AuditError::Sentiment(SentimentError::LexiconIo { .. })
            | AuditError::Markedness(MarkednessError::TagLexicon { .. } | MarkednessError::InvalidConfig(_))
            | AuditError::Text(TextError::StopWordsIo { .. }) => ErrorKind::Config,
            _ => ErrorKind::Data,
        }
    }
}

/// Run the audit described by `config` on its configured thread count.
pub fn run_audit(config: &AuditConfig) -> Result<MetricReport, AuditError> {
    config.validate()?;
    par::with_threads(config.threads, || Audit::new(config).run())
}

/// Run the audit and write its report under `config.output.dir`.
pub fn run_and_write(config: &AuditConfig) -> Result<(MetricReport, Vec<PathBuf>), AuditError> {
    let report = run_audit(config)?;
    let files = report.write(&config.output.dir, config.output.emit_plot_data)?;
    Ok((report, files))
}

/// Re-render `report.md` and the tables from a saved `report.json`.
pub fn render_from_json(json_path: &Path, out_dir: &Path, plot_data: bool) -> Result<Vec<PathBuf>, AuditError> {
    let text = std::fs::read_to_string(json_path)
        .map_err(|e| AuditError::Config(format!("cannot read {}: {e}", json_path.display())))?;
    MetricReport::from_json(&text)?.write(out_dir, plot_data)
}

/// Hash of everything that determines the report's numbers. Output
/// location and thread count are left out; corpus files enter by content.
pub fn fingerprint(config: &AuditConfig) -> Result<String, AuditError> {
    let mut c = config.clone();
    c.threads = None;
    c.output.dir = PathBuf::new();
    let hash = |p: &Path| file_sha256(p).map_err(|e| AuditError::Config(format!("cannot read {}: {e}", p.display())));
    c.corpus.human = PathBuf::from(hash(&config.corpus.human)?);
    c.corpus.synthetic = PathBuf::from(hash(&config.corpus.synthetic)?);
    let mut files: Vec<(&str, &Path)> = Vec::new();
    if let Some(p) = config.gate.as_ref().and_then(|g| g.scores.as_deref()) {
        files.push(("gate.scores", p));
    }
    for (name, p) in [
        ("embedding.path", &config.embedding.path),
        ("markedness.tags", &config.markedness.tags),
        ("sentiment.lexicon", &config.sentiment.lexicon),
    ] {
        if let Some(p) = p {
            files.push((name, p));
        }
    }
    let stop_words = config.text.stop_words.clone();
    let sw_path = PathBuf::from(&stop_words);
    if stop_words != "english" && stop_words != "none" {
        files.push(("text.stop_words", &sw_path));
    }
    let mut key = serde_json::json!({
        "tool": env!("CARGO_PKG_VERSION"),
        "config": serde_json::to_value(&c).map_err(|e| AuditError::Config(e.to_string()))?,
    });
    for (name, p) in files {
        key["files"][name] = serde_json::Value::String(hash(p)?);
    }
    // Paths other than corpus ones still carry machine-specific prefixes;
    // their content hashes above are what matters.
    strip_paths(&mut key["config"]);
    Ok(sha256_hex(key.to_string().as_bytes()))
}

fn strip_paths(v: &mut serde_json::Value) {
    for pointer in ["/gate/scores", "/embedding/path", "/embedding/cache", "/markedness/tags", "/sentiment/lexicon"] {
        if let Some(x) = v.pointer_mut(pointer) {
            if !x.is_null() {
                *x = serde_json::Value::String("<file>".into());
            }
        }
    }
    if let Some(x) = v.pointer_mut("/text/stop_words") {
        if x != "english" && x != "none" {
            *x = serde_json::Value::String("<file>".into());
        }
    }
}

type ProviderWithCache = (Box<dyn EmbeddingProvider>, Option<Arc<EmbeddingCache>>);

struct Audit<'c> {
    config: &'c AuditConfig,
    flags: Vec<String>,
}

fn load_side(path: &Path, want: SourceClass) -> Result<Vec<PersonaDocument>, AuditError> {
    let docs = load_corpus(path, CorpusFormat::from_path(path))?;
    if let Some(bad) = docs.iter().find(|d| d.source.class() != want) {
        return Err(AuditError::Data(format!(
            "{}: document `{}` is not a {} document",
            path.display(),
            bad.id,
            want.code()
        )));
    }
    Ok(docs)
}

fn stop_words(spec: &str) -> Result<Option<StopWords>, AuditError> {
    Ok(match spec {
        "none" => None,
        "english" => Some(StopWords::english()),
        path => Some(StopWords::from_file(Path::new(path))?),
    })
}

fn welch_outcome(a: &[f64], b: &[f64]) -> TestOutcome {
    match welch_t(a, b) {
        Ok(r) => TestOutcome::Welch(r),
        Err(e) => TestOutcome::Unavailable { reason: e.to_string() },
    }
}

impl<'c> Audit<'c> {
    fn new(config: &'c AuditConfig) -> Self {
        Audit { config, flags: Vec::new() }
    }

    fn run(mut self) -> Result<MetricReport, AuditError> {
        let cfg = self.config;
        let fingerprint = fingerprint(cfg)?;
        let human = load_side(&cfg.corpus.human, SourceClass::Human)?;
        let synthetic = load_side(&cfg.corpus.synthetic, SourceClass::Model)?;
        let corpus = CorpusSummary {
            human_sha256: file_sha256(&cfg.corpus.human).map_err(|e| AuditError::Io(e.to_string()))?,
            synthetic_sha256: file_sha256(&cfg.corpus.synthetic).map_err(|e| AuditError::Io(e.to_string()))?,
            human_documents: human.len(),
            synthetic_documents: synthetic.len(),
        };
        let (human, gate) = self.gate(human)?;
        let mut docs = human;
        docs.extend(synthetic);
        let mut ids = BTreeSet::new();
        for d in &docs {
            if !ids.insert(d.id.as_str()) {
                return Err(AuditError::Data(format!("document id `{}` appears more than once", d.id)));
            }
        }
        let groups_part = partition(&docs, &GroupSchema::RACE_SOURCE);
        let groups = groups_part.iter().map(|(k, v)| GroupCount { group: k.clone(), documents: v.len() }).collect();

        let analysis = TokenizerConfig { stop_words: stop_words(&cfg.text.stop_words)? };
        let marked_tok = if cfg.text.markedness_stop_words { analysis.clone() } else { TokenizerConfig::raw() };
        let markedness = self.markedness(&groups_part, &marked_tok)?;

        let tokens: Vec<Vec<String>> = par::map(&docs, |d| tokenize(&d.text, &analysis));
        let tfidf_rows = self.top_terms(&docs, &tokens, &groups_part)?;
        let doc_table = tfidf(&tokens)?;
        let tfidf_avg: BTreeMap<String, f64> =
            docs.iter().enumerate().map(|(i, d)| (d.id.clone(), doc_table.mean_score(i))).collect();

        let words = self.word_vectors(&tokens)?;
        let (provider, cache) = self.provider()?;
        let refs: Vec<&PersonaDocument> = docs.iter().collect();
        let stories = embed_stories(&refs, provider.as_ref(), &words, &analysis)?;
        if let Some(c) = cache {
            c.persist()?;
        }
        let creativity = self.creativity(&docs, &groups_part, &stories, &tfidf_avg);
        let sentiment = self.sentiment(&groups_part)?;
        let checks = direction_checks(&creativity, &sentiment);

        let provenance = Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            seed: cfg.seed,
            embedding_provider: provider.id(),
            word_vectors: format!("ppmi-svd dim {} ({})", words.dim, words.trained_on),
            sentiment_scorers: std::iter::once("lexicon".to_owned())
                .chain(cfg.sentiment.external.iter().map(|e| format!("external:{}", e.name)))
                .collect(),
            corpus,
            gate,
        };
        Ok(MetricReport {
            audit_id: fingerprint[..12].to_owned(),
            fingerprint,
            provenance,
            groups,
            markedness,
            tfidf: tfidf_rows,
            creativity,
            sentiment,
            checks,
            flags: self.flags,
        })
    }

    fn gate(&mut self, human: Vec<PersonaDocument>) -> Result<(Vec<PersonaDocument>, Option<GateSummary>), AuditError> {
        let Some(g) = &self.config.gate else {
            return Ok((human, None));
        };
        let scorer: Box<dyn AuthenticityScorer> = match (&g.scores, &g.endpoint) {
            (Some(path), _) => {
                let stub = StubScorer::from_json_file(path, f64::NAN)
                    .map_err(|e| AuditError::Config(format!("gate scores {}: {e}", path.display())))?;
                if let Some(d) = human.iter().find(|d| !stub.scores.contains_key(&d.id)) {
                    return Err(AuditError::Data(format!(
                        "gate scores {} have no entry for document `{}`",
                        path.display(),
                        d.id
                    )));
                }
                Box::new(stub)
            }
            (None, Some(ep)) => Box::new(HttpScorer::new(ep.clone(), g.probability_pointer.clone())),
            (None, None) => return Err(AuditError::Config("gate needs `scores` or `endpoint`".into())),
        };
        let opts = GateOptions { threshold: g.threshold, mode: g.mode, ..GateOptions::default() };
        let out = gate_authenticity(&group_by_participant(&human), scorer.as_ref(), &opts)?;
        let summary = GateSummary {
            scorer: scorer.id(),
            threshold: g.threshold,
            participants_kept: out.participants_kept,
            participants_removed: out.participants_removed,
            documents_kept: out.kept.len(),
            documents_removed: out.removed.len(),
        };
        // Keep input order so the report does not depend on grouping.
        let kept: BTreeSet<&str> = out.kept.iter().map(|d| d.id.as_str()).collect();
        let human = human.iter().filter(|d| kept.contains(d.id.as_str())).cloned().collect();
        Ok((human, Some(summary)))
    }

    fn markedness(
        &mut self,
        part: &Partition<'_>,
        tokenizer: &TokenizerConfig,
    ) -> Result<Vec<crate::markedness::MarkedWordReport>, AuditError> {
        let config = self.config;
        let cfg = &config.markedness;
        let reference_race = Race::parse_lenient(&cfg.reference_race);
        let tags = cfg.tags.as_deref().map(TagLexicon::load).transpose()?;
        let sources: BTreeSet<SourceClass> = part.keys().filter_map(|k| k.source).collect();
        let mut pairs = Vec::new();
        for source in sources {
            let reference = GroupKey::race_source(reference_race, source);
            if !part.contains_key(&reference) {
                self.flags.push(format!(
                    "markedness: no {} group to compare against for {}",
                    reference_race.label(),
                    source.label()
                ));
                continue;
            }
            for key in part.keys().filter(|k| k.source == Some(source) && **k != reference) {
                pairs.push((key.clone(), reference.clone()));
            }
        }
        let reports = par::try_map(&pairs, |(group, reference)| {
            marked_words(part, group, reference, cfg.top_k, tokenizer, &cfg.log_odds)
        })?;
        Ok(reports
            .into_iter()
            .map(|mut r| {
                if let Some(t) = &tags {
                    r.apply_tags(t);
                }
                r
            })
            .collect())
    }

    fn top_terms(
        &mut self,
        docs: &[PersonaDocument],
        tokens: &[Vec<String>],
        part: &Partition<'_>,
    ) -> Result<Vec<TopTerms>, AuditError> {
        let index: BTreeMap<&str, usize> = docs.iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect();
        let keys: Vec<&GroupKey> = part.keys().collect();
        let grouped: Vec<Vec<&Vec<String>>> =
            part.values().map(|ds| ds.iter().map(|d| &tokens[index[d.id.as_str()]]).collect()).collect();
        let pseudo = pseudo_documents(&grouped);
        let table = tfidf(&pseudo)?;
        Ok(keys
            .into_iter()
            .enumerate()
            .map(|(i, k)| TopTerms { group: k.clone(), terms: top_terms(&table, &[i], self.config.tfidf.top_k) })
            .collect())
    }

    fn word_vectors(&mut self, tokens: &[Vec<String>]) -> Result<WordEmbeddingModel, AuditError> {
        let params = self.config.words.params(self.config.seed);
        match crate::embedding::train_word_embeddings(tokens, &params) {
            Err(EmbeddingError::VocabularyTooSmall { vocabulary, dim }) if vocabulary > 0 => {
                self.flags.push(format!(
                    "word vectors: vocabulary of {vocabulary} is below {dim} dimensions; trained with {vocabulary}"
                ));
                let params = crate::embedding::WordEmbeddingParams { dim: vocabulary, ..params };
                Ok(crate::embedding::train_word_embeddings(tokens, &params)?)
            }
            Err(EmbeddingError::VocabularyTooSmall { .. }) => {
                self.flags.push("word vectors: empty vocabulary; complexity uses TF-IDF only".into());
                Ok(WordEmbeddingModel::default())
            }
            other => Ok(other?),
        }
    }

    fn provider(&self) -> Result<ProviderWithCache, AuditError> {
        let e = &self.config.embedding;
        Ok(match e.provider {
            EmbeddingBackend::Hash => (Box::new(HashEmbedder::new(e.dim, self.config.seed)), None),
            EmbeddingBackend::Store => {
                let path = e.path.as_deref().ok_or_else(|| AuditError::Config("embedding.path is required".into()))?;
                (Box::new(VectorStore::load(path)?), None)
            }
            EmbeddingBackend::Service => {
                let endpoint =
                    e.endpoint.clone().ok_or_else(|| AuditError::Config("embedding.endpoint is required".into()))?;
                let cache = Arc::new(match &e.cache {
                    Some(p) => EmbeddingCache::open(p)?,
                    None => EmbeddingCache::in_memory(),
                });
                let name = e.name.clone().unwrap_or_else(|| "service".into());
                let svc = ServiceEmbedder::new(name, endpoint, ServiceOptions::default(), cache.clone());
                (Box::new(svc), e.cache.is_some().then_some(cache))
            }
        })
    }

    fn creativity(
        &mut self,
        docs: &[PersonaDocument],
        part: &Partition<'_>,
        stories: &BTreeMap<String, crate::creativity::StoryEmbedding>,
        tfidf_avg: &BTreeMap<String, f64>,
    ) -> CreativitySection {
        let options = self.config.creativity;
        let mode = options.aggregation;
        let mut unscored = Vec::new();
        let mut keep = |scored: BTreeMap<GroupKey, Result<GroupCreativity, CreativityError>>| {
            let mut ok = BTreeMap::new();
            for (k, r) in scored {
                match r {
                    Ok(g) => {
                        ok.insert(k, g);
                    }
                    Err(e) => unscored.push(GroupError { group: k, error: e.to_string() }),
                }
            }
            ok
        };
        let by_group = keep(group_creativity(part, stories, tfidf_avg, &options));
        let setting_schema = GroupSchema { setting: true, ..GroupSchema::RACE_SOURCE };
        let by_race_setting = keep(group_creativity(&partition(docs, &setting_schema), stories, tfidf_avg, &options));

        let combine = |members: &BTreeMap<GroupKey, GroupCreativity>, label: fn(&GroupKey) -> GroupKey| {
            let mut buckets: BTreeMap<GroupKey, Vec<&GroupCreativity>> = BTreeMap::new();
            for (k, g) in members {
                buckets.entry(label(k)).or_default().push(g);
            }
            buckets
                .into_iter()
                .filter_map(|(k, ms)| aggregate(k.clone(), &ms, mode).map(|g| (k, g)))
                .collect::<BTreeMap<_, _>>()
        };
        let by_setting = combine(&by_race_setting, |k| GroupKey { race: None, ..k.clone() });
        let by_source = combine(&by_group, |k| GroupKey { source: k.source, ..GroupKey::default() });

        let human = GroupKey { source: Some(SourceClass::Human), ..GroupKey::default() };
        let model = GroupKey { source: Some(SourceClass::Model), ..GroupKey::default() };
        let full = GroupKey { setting: Some(PromptSetting::FullProfile), ..model.clone() };
        let mut tests = Vec::new();
        let mut seed = self.config.seed;
        for (m, h) in [(by_source.get(&model), by_source.get(&human)), (by_setting.get(&full), by_source.get(&human))] {
            let (Some(m), Some(h)) = (m, h) else { continue };
            tests.extend(self.creativity_tests(m, h, &mut seed));
        }
        if !by_source.contains_key(&model) || !by_source.contains_key(&human) {
            self.flags.push("creativity: a source has no scored groups; model vs human tests skipped".into());
        }
        let rows = |m: BTreeMap<GroupKey, GroupCreativity>| -> Vec<CreativityScores> {
            m.into_values().map(|g| g.scores).collect()
        };
        CreativitySection {
            options,
            by_group: rows(by_group),
            by_setting: rows(by_setting),
            by_source: rows(by_source),
            unscored,
            tests,
        }
    }

    fn creativity_tests(&self, m: &GroupCreativity, h: &GroupCreativity, seed: &mut u64) -> Vec<Comparison> {
        let resamples = self.config.stats.resamples;
        let (ms, hs): (&GroupSamples, &GroupSamples) = (&m.samples, &h.samples);
        let mut boot = |a: &[f64], b: &[f64], stat| {
            let s = *seed;
            *seed = seed.wrapping_add(1);
            match bootstrap_diff(a, b, stat, resamples, s) {
                Ok(r) => TestOutcome::Bootstrap(r),
                Err(e) => TestOutcome::Unavailable { reason: e.to_string() },
            }
        };
        let cmp = |metric: &str, outcome| Comparison {
            metric: metric.to_owned(),
            group1: m.scores.group.clone(),
            group2: h.scores.group.clone(),
            outcome,
        };
        vec![
            cmp("surprisal", welch_outcome(&ms.surprisal, &hs.surprisal)),
            cmp("diversity", boot(&ms.diversity, &hs.diversity, Statistic::Mean)),
            cmp("novelty", boot(&ms.novelty, &hs.novelty, Statistic::AbsMean)),
            cmp("complexity", welch_outcome(&ms.complexity, &hs.complexity)),
        ]
    }

    fn sentiment(&mut self, part: &Partition<'_>) -> Result<SentimentSection, AuditError> {
        let cfg = &self.config.sentiment;
        let lexicon = match &cfg.lexicon {
            Some(p) => SentimentLexicon::load(p)?,
            None => SentimentLexicon::builtin(),
        };
        let all: Vec<&PersonaDocument> = part.values().flatten().copied().collect();
        let mut runs: Vec<(String, Vec<SentimentScore>)> =
            vec![("lexicon".into(), par::map(&all, |d| score_lexicon(&d.id, &d.text, &lexicon)))];
        for ext in &cfg.external {
            let clf = HttpClassifier::new(ext.name.clone(), ext.endpoint.clone(), ext.retry);
            let scorer = ExternalScorer::new(Arc::new(clf));
            let items: Vec<(&str, &str)> = all.iter().map(|d| (d.id.as_str(), d.text.as_str())).collect();
            runs.push((format!("external:{}", ext.name), scorer.score(&items)?));
        }

        let mut rows = Vec::new();
        let mut tests = Vec::new();
        for (name, scores) in &runs {
            for (group, g) in group_sentiment(part, scores, cfg.per_participant)? {
                rows.push(SentimentRow { scorer: name.clone(), group, mean: g.mean, n: g.n });
            }
            let units = unit_samples(part, scores, cfg.per_participant);
            let races: BTreeSet<Race> = part.keys().filter_map(|k| k.race).collect();
            let mut pairs: Vec<(GroupKey, GroupKey)> = races
                .into_iter()
                .map(|r| (GroupKey::race_source(r, SourceClass::Model), GroupKey::race_source(r, SourceClass::Human)))
                .collect();
            pairs.push((
                GroupKey { source: Some(SourceClass::Model), ..GroupKey::default() },
                GroupKey { source: Some(SourceClass::Human), ..GroupKey::default() },
            ));
            for (m, h) in pairs {
                let (Some(a), Some(b)) = (units.get(&m), units.get(&h)) else { continue };
                tests.push(Comparison {
                    metric: format!("sentiment ({name})"),
                    group1: m,
                    group2: h,
                    outcome: welch_outcome(a, b),
                });
            }
        }
        Ok(SentimentSection { per_participant: cfg.per_participant, rows, tests })
    }
}

/// Polarity samples per race × source group and per source, one value per
/// document or per participant.
fn unit_samples(
    part: &Partition<'_>,
    scores: &[SentimentScore],
    per_participant: bool,
) -> BTreeMap<GroupKey, Vec<f64>> {
    let by_id: BTreeMap<&str, f64> = scores.iter().map(|s| (s.document_id.as_str(), s.polarity)).collect();
    let mut out: BTreeMap<GroupKey, Vec<f64>> = BTreeMap::new();
    for (key, docs) in part {
        let mut units: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for d in docs {
            let unit = if per_participant { d.participant_id() } else { d.id.as_str() };
            if let Some(p) = by_id.get(d.id.as_str()) {
                units.entry(unit).or_default().push(*p);
            }
        }
        let values: Vec<f64> = units.values().map(|xs| compensated_sum(xs.iter().copied()) / xs.len() as f64).collect();
        let source = GroupKey { source: key.source, ..GroupKey::default() };
        out.entry(source).or_default().extend(&values);
        out.insert(key.clone(), values);
    }
    out
}

fn direction_checks(c: &CreativitySection, s: &SentimentSection) -> Vec<DirectionCheck> {
    let source = |class| c.by_source.iter().find(|r| r.group.source == Some(class) && r.group.race.is_none());
    let (m, h) = (source(SourceClass::Model), source(SourceClass::Human));
    let cmp = |f: fn(&CreativityScores) -> f64, greater: bool| match (m, h) {
        (Some(m), Some(h)) => Some(if greater { f(m) > f(h) } else { f(m) < f(h) }),
        _ => None,
    };
    let mut races: BTreeMap<Race, (Option<f64>, Option<f64>)> = BTreeMap::new();
    for r in s.rows.iter().filter(|r| r.scorer == "lexicon") {
        if let (Some(race), Some(src)) = (r.group.race, r.group.source) {
            let e = races.entry(race).or_default();
            match src {
                SourceClass::Model => e.0 = Some(r.mean),
                SourceClass::Human => e.1 = Some(r.mean),
            }
        }
    }
    let paired: Vec<bool> = races.values().filter_map(|(m, h)| Some(m.as_ref()? > h.as_ref()?)).collect();
    vec![
        DirectionCheck {
            name: "diversity".into(),
            expectation: "model stories are less diverse than human stories".into(),
            holds: cmp(|r| r.diversity, false),
        },
        DirectionCheck {
            name: "novelty".into(),
            expectation: "model stories are more novel than human stories".into(),
            holds: cmp(|r| r.novelty, true),
        },
        DirectionCheck {
            name: "complexity".into(),
            expectation: "model stories are more complex than human stories".into(),
            holds: cmp(|r| r.complexity_mean, true),
        },
        DirectionCheck {
            name: "sentiment".into(),
            expectation: "model personas are more positive than humans of the same race".into(),
            holds: (!paired.is_empty()).then(|| paired.iter().all(|x| *x)),
        },
    ]
}
