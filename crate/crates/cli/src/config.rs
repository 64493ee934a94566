//! Layered settings: built-in defaults, then the key-value file, then the
//! provider environment variables, then command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use claimtrust::claims::{ClassifyOptions, ExtractOptions, DEFAULT_BUDGET};
use claimtrust::embed::{DEFAULT_BATCH_SIZE, DEFAULT_TOP_K};
use claimtrust::eval::EvalSettings;
use claimtrust::ingest::{parse_date, CorpusFilter};
use claimtrust::providers::ProviderConfig;
use claimtrust::rerank::DEFAULT_PREFIX_CHARS;
use claimtrust::{Error, Result, TrustConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderKind {
    Mock,
    Http,
}

impl FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(ProviderKind::Mock),
            "http" => Ok(ProviderKind::Http),
            other => Err(format!("expected `mock` or `http`, got `{other}`")),
        }
    }
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProviderKind::Mock => "mock",
            ProviderKind::Http => "http",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub provider_kind: ProviderKind,
    pub mock_seed: u64,
    pub provider: ProviderConfig,
    pub templates_dir: Option<PathBuf>,
    pub filter: CorpusFilter,
    pub extract: ExtractOptions,
    pub batch_size: usize,
    pub top_k: usize,
    pub budget: usize,
    pub classify: ClassifyOptions,
    pub trust: TrustConfig,
    pub prefix_chars: usize,
    pub eval: EvalSettings,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            provider_kind: ProviderKind::Http,
            mock_seed: 0,
            provider: ProviderConfig::default(),
            templates_dir: None,
            filter: CorpusFilter::default(),
            extract: ExtractOptions::default(),
            batch_size: DEFAULT_BATCH_SIZE,
            top_k: DEFAULT_TOP_K,
            budget: DEFAULT_BUDGET,
            classify: ClassifyOptions::default(),
            trust: TrustConfig::default(),
            prefix_chars: DEFAULT_PREFIX_CHARS,
            eval: EvalSettings::default(),
        }
    }
}

/// Every key the settings file and `--set` accept.
pub const KEYS: &[&str] = &[
    "provider.kind",
    "provider.mock_seed",
    "provider.base_url",
    "provider.api_key",
    "provider.chat_model",
    "provider.embed_model",
    "provider.timeout",
    "provider.max_retries",
    "provider.temperature",
    "provider.max_in_flight",
    "provider.backoff_ms",
    "templates.dir",
    "ingest.date_from",
    "ingest.date_to",
    "ingest.subject",
    "extract.max_claims",
    "embed.batch_size",
    "pairs.top_k",
    "classify.budget",
    "classify.max_reasks",
    "solver.alpha",
    "solver.tolerance",
    "solver.max_iterations",
    "solver.initial_unknown",
    "solver.initial_trusted",
    "rerank.lambda",
    "rerank.top_n",
    "rerank.prefix_chars",
    "eval.context_docs",
    "eval.context_chars",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Validation(format!("{key} = {value:?}: {e}")))
}

fn parse_day(key: &str, value: &str) -> Result<Option<NaiveDate>> {
    if value.is_empty() {
        return Ok(None);
    }
    parse_date(value)
        .map(Some)
        .ok_or_else(|| Error::Validation(format!("{key} = {value:?}: not a recognised date")))
}

fn optional(value: &str) -> Option<String> {
    (!value.is_empty()).then(|| value.to_string())
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "provider.kind" => self.provider_kind = parse(key, value)?,
            "provider.mock_seed" => self.mock_seed = parse(key, value)?,
            "provider.base_url" => self.provider.base_url = value.to_string(),
            "provider.api_key" => self.provider.api_key = optional(value),
            "provider.chat_model" => self.provider.chat_model = value.to_string(),
            "provider.embed_model" => self.provider.embed_model = value.to_string(),
            "provider.timeout" => self.provider.timeout = parse(key, value)?,
            "provider.max_retries" => self.provider.max_retries = parse(key, value)?,
            "provider.temperature" => self.provider.temperature = parse(key, value)?,
            "provider.max_in_flight" => self.provider.max_in_flight = parse(key, value)?,
            "provider.backoff_ms" => self.provider.backoff_ms = parse(key, value)?,
            "templates.dir" => self.templates_dir = optional(value).map(PathBuf::from),
            "ingest.date_from" => self.filter.date_from = parse_day(key, value)?,
            "ingest.date_to" => self.filter.date_to = parse_day(key, value)?,
            "ingest.subject" => self.filter.subject = optional(value),
            "extract.max_claims" => self.extract.max_claims = parse(key, value)?,
            "embed.batch_size" => self.batch_size = parse(key, value)?,
            "pairs.top_k" => self.top_k = parse(key, value)?,
            "classify.budget" => self.budget = parse(key, value)?,
            "classify.max_reasks" => self.classify.max_reasks = parse(key, value)?,
            "solver.alpha" => self.trust.alpha = parse(key, value)?,
            "solver.tolerance" => self.trust.tolerance = parse(key, value)?,
            "solver.max_iterations" => self.trust.max_iterations = parse(key, value)?,
            "solver.initial_unknown" => self.trust.initial_unknown = parse(key, value)?,
            "solver.initial_trusted" => self.trust.initial_trusted = parse(key, value)?,
            "rerank.lambda" => self.eval.lambda = parse(key, value)?,
            "rerank.top_n" => self.eval.top_n = parse(key, value)?,
            "rerank.prefix_chars" => self.prefix_chars = parse(key, value)?,
            "eval.context_docs" => self.eval.context_docs = parse(key, value)?,
            "eval.context_chars" => self.eval.context_chars = parse(key, value)?,
            other => return Err(Error::Validation(format!("unknown setting `{other}`"))),
        }
        Ok(())
    }

    /// Applies `section.key = value` lines. Blank lines and lines starting
    /// with `#` are ignored.
    pub fn apply_file_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Validation(format!(
                    "{}:{}: expected `section.key = value`",
                    origin.display(),
                    n + 1
                )));
            };
            self.set(key.trim(), value)
                .map_err(|e| Error::Validation(format!("{}:{}: {e}", origin.display(), n + 1)))?;
        }
        Ok(())
    }

    /// Resolves the final settings. `overrides` come from flags and win over
    /// everything else.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Settings> {
        let mut settings = Settings::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
            settings.apply_file_text(&text, path)?;
        }
        settings.provider.apply_env();
        for (key, value) in overrides {
            settings.set(key, value)?;
        }
        settings.validate()?;
        Ok(settings)
    }

    pub fn validate(&self) -> Result<()> {
        self.trust.validate()?;
        self.filter.validate()?;
        let positive = [
            ("embed.batch_size", self.batch_size),
            ("extract.max_claims", self.extract.max_claims),
            ("rerank.top_n", self.eval.top_n),
            ("eval.context_docs", self.eval.context_docs),
        ];
        if let Some((key, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Validation(format!("{key} must be positive")));
        }
        if !(0.0..=1.0).contains(&self.eval.lambda) {
            return Err(Error::Validation(format!(
                "rerank.lambda must lie in [0, 1], got {}",
                self.eval.lambda
            )));
        }
        if self.provider_kind == ProviderKind::Http {
            self.provider
                .validate()
                .map_err(|e| Error::Validation(e.to_string()))?;
        }
        Ok(())
    }
}

/// Splits a `--set` argument.
pub fn parse_assignment(raw: &str) -> Result<(String, String), String> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| format!("expected KEY=VALUE, got `{raw}`"))?;
    let key = key.trim();
    if !KEYS.contains(&key) {
        return Err(format!("unknown setting `{key}`"));
    }
    Ok((key.to_string(), value.trim().to_string()))
}
