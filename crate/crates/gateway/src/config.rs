//! Gateway configuration: defaults, then a TOML file, then `AXS_*`
//! environment variables, then command-line flags.
//!
//! Environment keys map onto the TOML tree: `AXS_PORT` sets `port`, and a
//! double underscore descends into a table, so
//! `AXS_BACKPRESSURE__QUEUE_BOUND=32` sets `backpressure.queue_bound`.
//! Values are read as TOML literals when they parse as one and as plain
//! strings otherwise.

use std::path::{Path, PathBuf};

use axs_core::backpressure::BackpressureConfig;
use axs_core::chunker::ChunkParams;
use axs_core::pipeline::SessionSettings;
use axs_core::recognizer::RecognizerConfig;
use axs_core::summarizer::SummaryConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_PREFIX: &str = "AXS_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Parse(String),
    #[error("environment variable {key}: {message}")]
    Env { key: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexiconPair {
    pub source: String,
    pub target: String,
    /// Two-column TSV lexicon.
    pub path: PathBuf,
}

impl Default for LexiconPair {
    fn default() -> Self {
        Self {
            source: String::new(),
            target: String::new(),
            path: PathBuf::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExternalPair {
    pub source: String,
    pub target: String,
    pub endpoint: String,
    pub timeout_ms: u64,
}

impl Default for ExternalPair {
    fn default() -> Self {
        Self {
            source: String::new(),
            target: String::new(),
            endpoint: String::new(),
            timeout_ms: 1500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslationConfig {
    /// Register the built-in en->fr lexicon.
    pub bundled: bool,
    pub lexicons: Vec<LexiconPair>,
    pub external: Vec<ExternalPair>,
}

impl Default for TranslationConfig {
    fn default() -> Self {
        Self {
            bundled: true,
            lexicons: Vec::new(),
            external: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmotionConfig {
    /// Replaces the bundled lexicon.
    pub lexicon: Option<PathBuf>,
    /// Remote classifier; the lexicon is not used when set.
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
}

impl Default for EmotionConfig {
    fn default() -> Self {
        Self {
            lexicon: None,
            endpoint: None,
            timeout_ms: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub host: String,
    pub port: u16,
    /// Compiled sign dictionary. Without one the gateway serves a
    /// synthetic demo dictionary of `demo_words` signs.
    pub dictionary: Option<PathBuf>,
    pub demo_words: usize,
    pub log_level: String,
    pub join_timeout_ms: u64,
    /// Per-connection outbound queue, in envelopes.
    pub outbound_buffer: usize,
    pub max_frame_bytes: usize,
    pub transition_frames: usize,
    pub summary_tick_ms: u64,
    pub recognizer: RecognizerConfig,
    pub chunk: ChunkParams,
    pub backpressure: BackpressureConfig,
    /// Settings for sessions created without explicit ones.
    pub session: SessionSettings,
    pub summary: SummaryConfig,
    pub translation: TranslationConfig,
    pub emotion: EmotionConfig,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            dictionary: None,
            demo_words: 60,
            log_level: "info".into(),
            join_timeout_ms: 5000,
            outbound_buffer: 1024,
            max_frame_bytes: 1 << 20,
            transition_frames: axs_core::signgen::DEFAULT_TRANSITION_FRAMES,
            summary_tick_ms: 1000,
            recognizer: RecognizerConfig::default(),
            chunk: ChunkParams::default(),
            backpressure: BackpressureConfig::default(),
            session: SessionSettings::default(),
            summary: SummaryConfig::default(),
            translation: TranslationConfig::default(),
            emotion: EmotionConfig::default(),
        }
    }
}

/// Flag-level overrides, applied last.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub host: Option<String>,
    pub port: Option<u16>,
    pub dictionary: Option<PathBuf>,
    pub recognizer: Option<axs_core::recognizer::RecognizerBackend>,
    pub recognizer_endpoint: Option<String>,
    pub log_level: Option<String>,
}

fn env_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_owned())),
        Err(_) => toml::Value::String(raw.to_owned()),
    }
}

fn set_path(table: &mut toml::Table, key: &str, path: &[String], value: toml::Value) -> Result<(), ConfigError> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| ConfigError::Env {
            key: key.to_owned(),
            message: format!("{p} is not a table"),
        })?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

impl GatewayConfig {
    /// Layers a TOML document (possibly empty) and environment pairs over
    /// the defaults. Only keys starting with `AXS_` are considered.
    pub fn layered<I>(toml_text: &str, env: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: toml::Table = toml_text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let mut vars: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        vars.sort();
        for (key, raw) in vars {
            let path: Vec<String> = key[ENV_PREFIX.len()..]
                .to_lowercase()
                .split("__")
                .map(str::to_owned)
                .collect();
            if path.iter().any(String::is_empty) {
                return Err(ConfigError::Env {
                    key,
                    message: "empty path segment".into(),
                });
            }
            set_path(&mut table, &key, &path, env_value(&raw))?;
        }
        let config: GatewayConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        Ok(config)
    }

    /// Reads `path` (if any) and the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError::Read {
                path: p.display().to_string(),
                message: e.to_string(),
            })?,
            None => String::new(),
        };
        Self::layered(&text, std::env::vars())
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(v) = o.host {
            self.host = v;
        }
        if let Some(v) = o.port {
            self.port = v;
        }
        if let Some(v) = o.dictionary {
            self.dictionary = Some(v);
        }
        if let Some(v) = o.recognizer {
            self.recognizer.backend = v;
            if v == axs_core::recognizer::RecognizerBackend::Mock {
                self.recognizer.endpoint = None;
            }
        }
        if let Some(v) = o.recognizer_endpoint {
            self.recognizer.endpoint = Some(v);
        }
        if let Some(v) = o.log_level {
            self.log_level = v;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        self.recognizer
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("recognizer: {e}")))?;
        self.chunk
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("chunk: {e}")))?;
        self.backpressure
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("backpressure: {e}")))?;
        self.session
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("session: {e}")))?;
        self.summary
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("summary: {e}")))?;
        if self.join_timeout_ms == 0 {
            return invalid("join_timeout_ms must be positive".into());
        }
        if self.outbound_buffer == 0 {
            return invalid("outbound_buffer must be positive".into());
        }
        if self.summary_tick_ms == 0 {
            return invalid("summary_tick_ms must be positive".into());
        }
        if self.max_frame_bytes < 1024 {
            return invalid("max_frame_bytes must be at least 1024".into());
        }
        Ok(())
    }

    pub fn bind_addr(&self) -> String {
        format!("{}:{}", self.host, self.port)
    }
}
