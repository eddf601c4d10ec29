use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::AuditError;
use crate::corpus::GateMode;
use crate::creativity::CreativityOptions;
use crate::embedding::WordEmbeddingParams;
use crate::markedness::LogOddsConfig;
use crate::net::{Endpoint, RetryPolicy};
use crate::stats::DEFAULT_RESAMPLES;

/// Everything an audit run needs. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default)]
    pub seed: u64,
    /// Worker threads for metric kernels; unset uses every core. Results
    /// do not depend on it.
    #[serde(default)]
    pub threads: Option<usize>,
    pub corpus: CorpusPaths,
    #[serde(default)]
    pub gate: Option<GateConfig>,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub words: WordsConfig,
    #[serde(default)]
    pub text: TextConfig,
    #[serde(default)]
    pub markedness: MarkednessConfig,
    #[serde(default)]
    pub tfidf: TfIdfConfig,
    #[serde(default)]
    pub creativity: CreativityOptions,
    #[serde(default)]
    pub sentiment: SentimentConfig,
    #[serde(default)]
    pub stats: StatsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPaths {
    pub human: PathBuf,
    pub synthetic: PathBuf,
}

/// Authenticity gate applied to the human corpus before any metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateConfig {
    #[serde(default = "default_gate_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub mode: GateMode,
    /// JSON map of document id to probability (offline replay).
    #[serde(default)]
    pub scores: Option<PathBuf>,
    #[serde(default)]
    pub endpoint: Option<Endpoint>,
    #[serde(default = "default_probability_pointer")]
    pub probability_pointer: String,
}

fn default_gate_threshold() -> f64 {
    0.85
}

fn default_probability_pointer() -> String {
    "/probability".to_owned()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingBackend {
    /// Deterministic hashed bag of words.
    #[default]
    Hash,
    /// Precomputed vectors from a file.
    Store,
    /// Remote encoder over HTTP.
    Service,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    #[serde(default)]
    pub provider: EmbeddingBackend,
    #[serde(default = "default_hash_dim")]
    pub dim: usize,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub endpoint: Option<Endpoint>,
    #[serde(default)]
    pub cache: Option<PathBuf>,
}

fn default_hash_dim() -> usize {
    64
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            provider: EmbeddingBackend::Hash,
            dim: default_hash_dim(),
            path: None,
            name: None,
            endpoint: None,
            cache: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WordsConfig {
    pub window: usize,
    pub dim: usize,
    pub min_count: u64,
    pub max_vocabulary: usize,
    pub exact_svd_limit: usize,
}

impl Default for WordsConfig {
    fn default() -> Self {
        let p = WordEmbeddingParams::default();
        WordsConfig {
            window: p.window,
            dim: p.dim,
            min_count: p.min_count,
            max_vocabulary: p.max_vocabulary,
            exact_svd_limit: p.exact_svd_limit,
        }
    }
}

impl WordsConfig {
    pub fn params(&self, seed: u64) -> WordEmbeddingParams {
        WordEmbeddingParams {
            window: self.window,
            dim: self.dim,
            min_count: self.min_count,
            max_vocabulary: self.max_vocabulary,
            exact_svd_limit: self.exact_svd_limit,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextConfig {
    /// `english`, `none`, or a path to a one-word-per-line list. Applies to
    /// TF-IDF and word vectors.
    pub stop_words: String,
    /// Remove stop words before log-odds too.
    pub markedness_stop_words: bool,
}

impl Default for TextConfig {
    fn default() -> Self {
        TextConfig { stop_words: "english".into(), markedness_stop_words: false }
    }
}

// No deny_unknown_fields here: serde does not support it with flatten.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarkednessConfig {
    /// Race code of the reference group.
    pub reference_race: String,
    pub top_k: usize,
    #[serde(flatten)]
    pub log_odds: LogOddsConfig,
    pub tags: Option<PathBuf>,
}

impl Default for MarkednessConfig {
    fn default() -> Self {
        MarkednessConfig { reference_race: "white".into(), top_k: 10, log_odds: LogOddsConfig::default(), tags: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TfIdfConfig {
    pub top_k: usize,
}

impl Default for TfIdfConfig {
    fn default() -> Self {
        TfIdfConfig { top_k: 15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalScorerConfig {
    pub name: String,
    pub endpoint: Endpoint,
    #[serde(default)]
    pub retry: RetryPolicy,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SentimentConfig {
    /// Lexicon file; the built-in lexicon when unset.
    pub lexicon: Option<PathBuf>,
    /// Average each participant's documents before the group mean.
    pub per_participant: bool,
    pub external: Vec<ExternalScorerConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsConfig {
    pub resamples: usize,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig { resamples: DEFAULT_RESAMPLES }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Also write tidy CSVs for charting.
    pub emit_plot_data: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("audit-out"), emit_plot_data: false }
    }
}

impl AuditConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, AuditError> {
        let mut c: AuditConfig = toml::from_str(text).map_err(|e| AuditError::Config(e.to_string()))?;
        c.resolve(base);
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, AuditError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AuditError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        AuditConfig::parse(&text, base)
    }

    /// Minimal config over two corpus files with every default.
    pub fn for_corpora(human: &Path, synthetic: &Path) -> Self {
        AuditConfig {
            seed: 0,
            threads: None,
            corpus: CorpusPaths { human: human.to_owned(), synthetic: synthetic.to_owned() },
            gate: None,
            embedding: EmbeddingConfig::default(),
            words: WordsConfig::default(),
            text: TextConfig::default(),
            markedness: MarkednessConfig::default(),
            tfidf: TfIdfConfig::default(),
            creativity: CreativityOptions::default(),
            sentiment: SentimentConfig::default(),
            stats: StatsConfig::default(),
            output: OutputConfig::default(),
        }
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus.human);
        fix(&mut self.corpus.synthetic);
        fix(&mut self.output.dir);
        if let Some(g) = &mut self.gate {
            if let Some(p) = &mut g.scores {
                fix(p);
            }
        }
        for p in [
            &mut self.embedding.path,
            &mut self.embedding.cache,
            &mut self.markedness.tags,
            &mut self.sentiment.lexicon,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        let sw = &self.text.stop_words;
        if sw != "english" && sw != "none" && Path::new(sw).is_relative() {
            self.text.stop_words = base.join(sw).to_string_lossy().into_owned();
        }
    }

    /// Check every referenced input exists and option values are sane.
    pub fn validate(&self) -> Result<(), AuditError> {
        let must_exist = |what: &str, p: &Path| {
            if p.is_file() {
                Ok(())
            } else {
                Err(AuditError::Config(format!("{what} file not found: {}", p.display())))
            }
        };
        must_exist("human corpus", &self.corpus.human)?;
        must_exist("synthetic corpus", &self.corpus.synthetic)?;
        if let Some(g) = &self.gate {
            if !(0.0..=1.0).contains(&g.threshold) {
                return Err(AuditError::Config(format!("gate threshold {} is outside [0, 1]", g.threshold)));
            }
            match (&g.scores, &g.endpoint) {
                (Some(p), None) => must_exist("gate scores", p)?,
                (None, Some(_)) => {}
                _ => return Err(AuditError::Config("gate needs exactly one of `scores` or `endpoint`".into())),
            }
        }
        match self.embedding.provider {
            EmbeddingBackend::Hash if self.embedding.dim == 0 => {
                return Err(AuditError::Config("embedding.dim must be positive".into()))
            }
            EmbeddingBackend::Store => must_exist(
                "embedding store",
                self.embedding
                    .path
                    .as_deref()
                    .ok_or_else(|| AuditError::Config("embedding.provider = \"store\" needs embedding.path".into()))?,
            )?,
            EmbeddingBackend::Service if self.embedding.endpoint.is_none() => {
                return Err(AuditError::Config("embedding.provider = \"service\" needs embedding.endpoint".into()))
            }
            _ => {}
        }
        for (what, p) in [("tag lexicon", &self.markedness.tags), ("sentiment lexicon", &self.sentiment.lexicon)] {
            if let Some(p) = p {
                must_exist(what, p)?;
            }
        }
        let sw = &self.text.stop_words;
        if sw != "english" && sw != "none" {
            must_exist("stop-word", Path::new(sw))?;
        }
        if self.stats.resamples < crate::stats::MIN_RESAMPLES {
            return Err(AuditError::Config(format!(
                "stats.resamples must be at least {}",
                crate::stats::MIN_RESAMPLES
            )));
        }
        if self.markedness.top_k == 0 || self.tfidf.top_k == 0 {
            return Err(AuditError::Config("top_k values must be positive".into()));
        }
        if self.words.window == 0 || self.words.dim == 0 {
            return Err(AuditError::Config("words.window and words.dim must be positive".into()));
        }
        if crate::corpus::Race::parse_lenient(&self.markedness.reference_race).code() != self.markedness.reference_race
        {
            return Err(AuditError::Config(format!(
                "markedness.reference_race `{}` is not a race code",
                self.markedness.reference_race
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_relative_paths() {
        let c = AuditConfig::parse("[corpus]\nhuman = \"h.jsonl\"\nsynthetic = \"/abs/s.jsonl\"\n", Path::new("/base"))
            .unwrap();
        assert_eq!(c.corpus.human, PathBuf::from("/base/h.jsonl"));
        assert_eq!(c.corpus.synthetic, PathBuf::from("/abs/s.jsonl"));
        assert_eq!(c.markedness.top_k, 10);
        assert_eq!(c.markedness.log_odds.z_threshold, 1.96);
        assert_eq!(c.tfidf.top_k, 15);
        assert_eq!(c.stats.resamples, 1000);
    }

    #[test]
    fn unknown_keys_and_missing_files_rejected() {
        assert!(matches!(
            AuditConfig::parse("[corpus]\nhuman=\"a\"\nsynthetic=\"b\"\nbogus=1\n", Path::new(".")),
            Err(AuditError::Config(_))
        ));
        let c = AuditConfig::parse("[corpus]\nhuman=\"nope.jsonl\"\nsynthetic=\"b\"\n", Path::new("/tmp")).unwrap();
        let e = c.validate().unwrap_err().to_string();
        assert!(e.contains("/tmp/nope.jsonl"), "{e}");
    }

    #[test]
    fn nested_sections_parse() {
        let text = r#"
seed = 3
threads = 2
[corpus]
human = "h"
synthetic = "s"
[gate]
scores = "g.json"
mode = "document"
[embedding]
provider = "service"
endpoint = { url = "http://localhost:1/embed", api_key_env = "EMBED_KEY" }
[markedness]
top_k = 5
prior_scale = 0.5
[creativity]
aggregation = "macro"
novelty_scope = "global"
[[sentiment.external]]
name = "clf"
endpoint = { url = "http://localhost:2/score" }
"#;
        let c = AuditConfig::parse(text, Path::new("/b")).unwrap();
        assert_eq!(c.gate.as_ref().unwrap().mode, GateMode::Document);
        assert_eq!(c.markedness.log_odds.prior_scale, 0.5);
        assert_eq!(c.creativity.aggregation, crate::creativity::AggregationMode::Macro);
        assert_eq!(c.sentiment.external[0].name, "clf");
        assert_eq!(c.embedding.endpoint.as_ref().unwrap().api_key_env.as_deref(), Some("EMBED_KEY"));
    }
}
