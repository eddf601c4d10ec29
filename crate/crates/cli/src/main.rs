use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use persona_audit::audit::{self, AuditConfig, AuditError, EmbeddingBackend, ErrorKind};
use persona_audit::corpus::{
    gate_authenticity, group_by_participant, load_corpus, partition, save_corpus, AuthenticityScorer, CorpusError,
    CorpusFormat, GateError, GateMode, GateOptions, GroupSchema, HttpScorer, PersonaDocument, PromptSetting,
    StubScorer,
};
use persona_audit::creativity::{AggregationMode, NoveltyScope, QuestionScope};
use persona_audit::genharness::{
    build_prompt, expected_cardinality, load_profiles, plan_jobs, run_batch, BatchLimits, ChatProvider, GenError,
    Journal, OpenAiCompatible, PromptTemplate, StubProvider, DEFAULT_TEMPERATURE,
};
use persona_audit::net::{Endpoint, RetryPolicy};

/// Audit synthetic personas against human self-descriptions.
#[derive(Debug, Parser)]
#[command(name = "persona-audit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate corpus files and print a summary.
    Ingest(IngestArgs),
    /// Drop human documents an AI-text detector flags.
    Gate(GateArgs),
    /// Generate model personas for a set of profiles.
    Generate(GenerateArgs),
    /// Run every metric and write the report.
    Audit(AuditArgs),
    /// Re-render Markdown and CSV tables from a saved report.json.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Auto,
    Jsonl,
    Csv,
}

impl Format {
    fn resolve(self, path: &Path) -> CorpusFormat {
        match self {
            Format::Auto => CorpusFormat::from_path(path),
            Format::Jsonl => CorpusFormat::JsonLines,
            Format::Csv => CorpusFormat::Csv,
        }
    }
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(required = true)]
    corpus: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    format: Format,
    /// Print the summary as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct GateArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// JSON object of document id to AI probability (offline replay).
    #[arg(long, conflicts_with = "endpoint", required_unless_present = "endpoint")]
    scores: Option<PathBuf>,
    /// Detector URL; POSTs `{"document": text}` per document.
    #[arg(long)]
    endpoint: Option<String>,
    /// Environment variable holding the detector API key.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long, default_value = "/probability")]
    probability_pointer: String,
    #[arg(long, default_value_t = 0.85)]
    threshold: f64,
    #[arg(long, value_enum, default_value = "participant")]
    mode: GateModeArg,
    #[arg(long, default_value_t = 4)]
    max_inflight: usize,
    /// Kept documents are written here.
    #[arg(long)]
    out: PathBuf,
    /// Per-document verdicts (JSONL).
    #[arg(long)]
    verdicts: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GateModeArg {
    Participant,
    Document,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Profiles, one JSON object per line.
    #[arg(long)]
    profiles: PathBuf,
    /// Comma-separated settings, or `all`.
    #[arg(long, default_value = "all")]
    settings: String,
    /// Comma-separated model names.
    #[arg(long, required = true, value_delimiter = ',')]
    models: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Append-only progress journal; defaults to `<out>.journal.jsonl`.
    #[arg(long)]
    journal: Option<PathBuf>,
    /// Print the prompts and exit without calling any provider.
    #[arg(long)]
    dry_run: bool,
    /// Use the offline deterministic provider.
    #[arg(long, conflicts_with = "base_url")]
    stub: bool,
    /// Base URL of an OpenAI-compatible API.
    #[arg(long)]
    base_url: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    api_key_env: String,
    #[arg(long, default_value_t = DEFAULT_TEMPERATURE)]
    temperature: f64,
    /// Prompt template (TOML); the built-in one otherwise.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Add the income clause to full-profile prompts.
    #[arg(long)]
    include_income: bool,
    #[arg(long, default_value_t = 4)]
    max_inflight: usize,
    #[arg(long, default_value_t = 3)]
    retries: u32,
}

#[derive(Debug, Args)]
struct AuditArgs {
    /// Audit configuration (TOML).
    #[arg(long, required_unless_present_all = ["human", "synthetic"])]
    config: Option<PathBuf>,
    /// Human corpus; overrides the config file.
    #[arg(long)]
    human: Option<PathBuf>,
    /// Synthetic corpus; overrides the config file.
    #[arg(long)]
    synthetic: Option<PathBuf>,
    /// Output directory [default: audit-out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for resampling and hashed embeddings.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Story embedding provider.
    #[arg(long, value_enum)]
    embedding: Option<EmbeddingArg>,
    /// Reference set for novelty.
    #[arg(long, value_enum)]
    novelty_scope: Option<NoveltyArg>,
    /// How group rows combine their members.
    #[arg(long, value_enum)]
    aggregation: Option<AggregationArg>,
    /// Score diversity per question or over pooled stories.
    #[arg(long, value_enum)]
    question_scope: Option<QuestionArg>,
    /// Bootstrap resamples.
    #[arg(long)]
    resamples: Option<usize>,
    /// Comparison group for marked words [default: white].
    #[arg(long)]
    reference_race: Option<String>,
    /// Also write tidy CSVs for charting.
    #[arg(long)]
    plot_data: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EmbeddingArg {
    Hash,
    Store,
    Service,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NoveltyArg {
    PerSource,
    Global,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AggregationArg {
    Micro,
    Macro,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum QuestionArg {
    Pooled,
    PerQuestion,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// A report.json written by `audit`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    plot_data: bool,
}

/// Failure of the command line itself (bad flag combinations).
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<AuditError>() {
            return e.kind().exit_code() as u8;
        }
        if let Some(e) = cause.downcast_ref::<GenError>() {
            return match e {
                GenError::Template(_) | GenError::UnknownModel(_) => 2,
                GenError::ProviderUnavailable(_) | GenError::QuotaExceeded(_) => 3,
                _ => 4,
            };
        }
        if let Some(e) = cause.downcast_ref::<GateError>() {
            return match e {
                GateError::InvalidThreshold(_) => 2,
                _ => 3,
            };
        }
        if cause.is::<CorpusError>() {
            return 4;
        }
    }
    ErrorKind::Data.exit_code() as u8
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Gate(a) => gate(a),
        Command::Generate(a) => generate(a),
        Command::Audit(a) => run_audit(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load(path: &Path, format: Format) -> Result<Vec<PersonaDocument>> {
    if !path.is_file() {
        return Err(usage(format!("corpus file not found: {}", path.display())));
    }
    load_corpus(path, format.resolve(path)).with_context(|| format!("loading {}", path.display()))
}

fn ingest(a: IngestArgs) -> Result<()> {
    let mut docs = Vec::new();
    for p in &a.corpus {
        docs.extend(load(p, a.format)?);
    }
    let mut seen = std::collections::BTreeSet::new();
    if let Some(d) = docs.iter().find(|d| !seen.insert(d.id.clone())) {
        return Err(anyhow::Error::new(CorpusError::Validation {
            line: 0,
            field: "id",
            message: format!("duplicate document id `{}`", d.id),
        }));
    }
    let participants = group_by_participant(&docs).len();
    let mut by_source: BTreeMap<String, usize> = BTreeMap::new();
    let mut by_setting: BTreeMap<String, usize> = BTreeMap::new();
    for d in &docs {
        *by_source.entry(d.source.model_name().unwrap_or("human").to_owned()).or_default() += 1;
        *by_setting.entry(d.prompt_setting.map(|s| s.code()).unwrap_or("none").to_owned()).or_default() += 1;
    }
    let groups: BTreeMap<String, usize> =
        partition(&docs, &GroupSchema::RACE_SOURCE).iter().map(|(k, v)| (k.slug(), v.len())).collect();
    let mut out = std::io::stdout().lock();
    if a.json {
        let v = serde_json::json!({
            "documents": docs.len(),
            "participants": participants,
            "by_source": by_source,
            "by_setting": by_setting,
            "groups": groups,
        });
        writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
    } else {
        writeln!(out, "documents\t{}\nparticipants\t{participants}", docs.len())?;
        for (k, n) in &by_source {
            writeln!(out, "source:{k}\t{n}")?;
        }
        for (k, n) in &by_setting {
            writeln!(out, "setting:{k}\t{n}")?;
        }
        for (k, n) in &groups {
            writeln!(out, "group:{k}\t{n}")?;
        }
    }
    Ok(())
}

fn gate(a: GateArgs) -> Result<()> {
    let docs = load(&a.corpus, Format::Auto)?;
    let scorer: Box<dyn AuthenticityScorer> = match (&a.scores, &a.endpoint) {
        (Some(p), _) => {
            let stub = StubScorer::from_json_file(p, f64::NAN)
                .map_err(|e| usage(format!("scores file {}: {e}", p.display())))?;
            if let Some(d) = docs.iter().find(|d| !stub.scores.contains_key(&d.id)) {
                return Err(anyhow::Error::new(CorpusError::Validation {
                    line: 0,
                    field: "id",
                    message: format!("no score for document `{}` in {}", d.id, p.display()),
                }));
            }
            Box::new(stub)
        }
        (None, Some(url)) => {
            let endpoint = Endpoint { api_key_env: a.api_key_env.clone(), ..Endpoint::new(url.clone()) };
            Box::new(HttpScorer::new(endpoint, a.probability_pointer.clone()))
        }
        (None, None) => return Err(usage("pass --scores or --endpoint")),
    };
    let opts = GateOptions {
        threshold: a.threshold,
        mode: match a.mode {
            GateModeArg::Participant => GateMode::Participant,
            GateModeArg::Document => GateMode::Document,
        },
        max_inflight: a.max_inflight.max(1),
        retry: RetryPolicy::default(),
    };
    let outcome = gate_authenticity(&group_by_participant(&docs), scorer.as_ref(), &opts)?;
    let kept: std::collections::BTreeSet<&str> = outcome.kept.iter().map(|d| d.id.as_str()).collect();
    let kept_docs: Vec<PersonaDocument> = docs.iter().filter(|d| kept.contains(d.id.as_str())).cloned().collect();
    if a.out == a.corpus {
        return Err(usage("--out must differ from --corpus; input corpora are never modified"));
    }
    save_corpus(&a.out, &kept_docs)?;
    if let Some(p) = &a.verdicts {
        let mut f = std::io::BufWriter::new(std::fs::File::create(p).with_context(|| p.display().to_string())?);
        for v in &outcome.verdicts {
            writeln!(f, "{}", serde_json::to_string(v)?)?;
        }
        f.flush()?;
    }
    println!(
        "participants kept {} removed {}; documents kept {} removed {}",
        outcome.participants_kept,
        outcome.participants_removed,
        outcome.kept.len(),
        outcome.removed.len()
    );
    Ok(())
}

fn parse_settings(s: &str) -> Result<Vec<PromptSetting>> {
    if s.trim() == "all" {
        return Ok(PromptSetting::ALL.to_vec());
    }
    s.split(',').map(|x| x.trim().parse::<PromptSetting>().map_err(usage)).collect()
}

fn generate(a: GenerateArgs) -> Result<()> {
    let profiles = load_profiles(&a.profiles)?;
    let settings = parse_settings(&a.settings)?;
    let mut template = match &a.template {
        Some(p) => PromptTemplate::load(p)?,
        None => PromptTemplate::default(),
    };
    template.include_income = a.include_income;
    let mut jobs = plan_jobs(&profiles, &settings, &a.models, a.temperature)?;
    log::info!(
        "{} jobs ({} profiles × {} settings × 6 questions × {} models)",
        jobs.len(),
        profiles.len(),
        settings.len(),
        a.models.len()
    );
    debug_assert_eq!(jobs.len(), expected_cardinality(profiles.len(), settings.len(), a.models.len()));

    if a.dry_run {
        let mut out = std::io::stdout().lock();
        for j in &jobs {
            let v = serde_json::json!({ "document_id": j.document_id(), "model": j.model, "prompt": build_prompt(j, &template)? });
            writeln!(out, "{v}")?;
        }
        return Ok(());
    }
    let out_path = a.out.clone().ok_or_else(|| usage("--out is required unless --dry-run"))?;
    let mut providers: BTreeMap<String, Arc<dyn ChatProvider>> = BTreeMap::new();
    for m in &a.models {
        let p: Arc<dyn ChatProvider> = if a.stub {
            Arc::new(StubProvider::new(m.clone()))
        } else {
            let url = a.base_url.clone().ok_or_else(|| usage("pass --base-url for a real provider, or --stub"))?;
            let endpoint = Endpoint { api_key_env: Some(a.api_key_env.clone()), ..Endpoint::new(url) };
            Arc::new(OpenAiCompatible::new(m.clone(), endpoint))
        };
        providers.insert(m.clone(), p);
    }
    let journal_path = a.journal.clone().unwrap_or_else(|| {
        let mut s = out_path.clone().into_os_string();
        s.push(".journal.jsonl");
        PathBuf::from(s)
    });
    let journal = Journal::open(&journal_path)?;
    let limits = BatchLimits {
        max_inflight: a.max_inflight.max(1),
        retry: RetryPolicy { retries: a.retries, ..RetryPolicy::default() },
    };
    let outcome = run_batch(&mut jobs, &providers, &template, &limits, Some(&journal))
        .with_context(|| format!("progress kept in {}; rerun to resume", journal_path.display()))?;
    save_corpus(&out_path, &outcome.documents)?;
    log::info!(
        "wrote {} documents to {} ({} resumed, {} requests, {} retries)",
        outcome.documents.len(),
        out_path.display(),
        outcome.resumed,
        outcome.requests,
        outcome.retries
    );
    if !outcome.failures.is_empty() {
        for f in &outcome.failures {
            log::error!("{}: {}", f.document_id, f.reason);
        }
        return Err(anyhow::Error::new(GenError::ProviderUnavailable(format!(
            "{} jobs failed after retries; rerun to retry them",
            outcome.failures.len()
        ))));
    }
    Ok(())
}

fn audit_config(a: &AuditArgs) -> Result<AuditConfig> {
    let mut c = match &a.config {
        Some(p) => AuditConfig::load(p)?,
        None => {
            let (Some(h), Some(s)) = (&a.human, &a.synthetic) else {
                return Err(usage("pass --config or both --human and --synthetic"));
            };
            AuditConfig::for_corpora(h, s)
        }
    };
    if a.config.is_some() {
        if let Some(h) = &a.human {
            c.corpus.human = h.clone();
        }
        if let Some(s) = &a.synthetic {
            c.corpus.synthetic = s.clone();
        }
    }
    if let Some(o) = &a.out {
        c.output.dir = o.clone();
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if a.threads.is_some() {
        c.threads = a.threads;
    }
    if let Some(e) = a.embedding {
        c.embedding.provider = match e {
            EmbeddingArg::Hash => EmbeddingBackend::Hash,
            EmbeddingArg::Store => EmbeddingBackend::Store,
            EmbeddingArg::Service => EmbeddingBackend::Service,
        };
    }
    if let Some(n) = a.novelty_scope {
        c.creativity.novelty_scope = match n {
            NoveltyArg::PerSource => NoveltyScope::PerSource,
            NoveltyArg::Global => NoveltyScope::Global,
        };
    }
    if let Some(m) = a.aggregation {
        c.creativity.aggregation = match m {
            AggregationArg::Micro => AggregationMode::Micro,
            AggregationArg::Macro => AggregationMode::Macro,
        };
    }
    if let Some(q) = a.question_scope {
        c.creativity.question_scope = match q {
            QuestionArg::Pooled => QuestionScope::Pooled,
            QuestionArg::PerQuestion => QuestionScope::PerQuestion,
        };
    }
    if let Some(r) = a.resamples {
        c.stats.resamples = r;
    }
    if let Some(r) = &a.reference_race {
        c.markedness.reference_race = r.clone();
    }
    c.output.emit_plot_data |= a.plot_data;
    Ok(c)
}

fn run_audit(a: AuditArgs) -> Result<()> {
    let config = audit_config(&a)?;
    let (report, files) = audit::run_and_write(&config)?;
    log::info!("audit {} wrote {} files under {}", report.audit_id, files.len(), config.output.dir.display());
    for ch in &report.checks {
        log::info!("check {}: {:?}", ch.name, ch.holds);
    }
    println!("{}", config.output.dir.join("report.json").display());
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let files = audit::render_from_json(&a.input, &a.out, a.plot_data)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settings_parse() {
        assert_eq!(parse_settings("all").unwrap().len(), 4);
        assert_eq!(
            parse_settings("race_only, full_profile").unwrap(),
            vec![PromptSetting::RaceOnly, PromptSetting::FullProfile]
        );
        let e = parse_settings("bogus").unwrap_err();
        assert_eq!(exit_code(&e), 2);
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(exit_code(&anyhow::Error::new(AuditError::Config("x".into()))), 2);
        assert_eq!(exit_code(&anyhow::Error::new(GenError::QuotaExceeded("x".into())).context("ctx")), 3);
        assert_eq!(exit_code(&anyhow::anyhow!("plain")), 4);
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
