//! Models and assets shared by every session, loaded once at startup.

use std::sync::Arc;
use std::time::Duration;

use axs_core::emotion::{EmotionBackend, EmotionLexicon, ExternalEmotion};
use axs_core::landmark::{self, synth};
use axs_core::recognizer::Recognizer;
use axs_core::signgen::SignDictionary;
use axs_core::summarizer::SummaryConfig;
use axs_core::translator::{LangPair, Lexicon, PairBackend, Translator};
use thiserror::Error;

use crate::config::{ConfigError, GatewayConfig};

/// Seed of the synthetic demo dictionary.
pub const DEMO_SEED: u64 = 1;

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot load {asset} from {path}: {message}")]
    Asset {
        asset: &'static str,
        path: String,
        message: String,
    },
    #[error("cannot bind {addr}: {message}")]
    BindFailed { addr: String, message: String },
}

impl StartupError {
    pub fn code(&self) -> &'static str {
        match self {
            StartupError::Config(_) => "INVALID_CONFIG",
            StartupError::Asset { .. } => "ASSET_LOAD_FAILED",
            StartupError::BindFailed { .. } => "BIND_FAILED",
        }
    }
}

pub struct Services {
    pub recognizer: Arc<dyn Recognizer>,
    pub translator: Translator,
    pub emotion: Arc<dyn EmotionBackend>,
    pub dictionary: Arc<SignDictionary>,
    pub summary: SummaryConfig,
}

fn asset_err(asset: &'static str, path: impl std::fmt::Display, e: impl std::fmt::Display) -> StartupError {
    StartupError::Asset {
        asset,
        path: path.to_string(),
        message: e.to_string(),
    }
}

impl Services {
    pub fn load(config: &GatewayConfig) -> Result<Self, StartupError> {
        config.validate()?;
        let dictionary = match &config.dictionary {
            Some(path) => landmark::load_dictionary(path).map_err(|e| asset_err("sign dictionary", path.display(), e))?,
            None => {
                tracing::warn!(
                    words = config.demo_words,
                    "no sign dictionary configured, serving the synthetic demo dictionary"
                );
                synth::demo_dictionary(config.demo_words, DEMO_SEED)
                    .map_err(|e| asset_err("demo dictionary", "<synthetic>", e))?
            }
        };
        tracing::info!(entries = dictionary.len(), version = %format!("{:016x}", dictionary.version()), "sign dictionary ready");

        let translator = if config.translation.bundled {
            Translator::with_bundled()
        } else {
            Translator::new()
        };
        for pair in &config.translation.lexicons {
            let lexicon = Lexicon::load(&pair.path).map_err(|e| asset_err("translation lexicon", pair.path.display(), e))?;
            translator
                .register_language_pair(
                    LangPair::new(&pair.source, &pair.target, PairBackend::Baseline),
                    Some(lexicon),
                )
                .map_err(|e| asset_err("translation lexicon", pair.path.display(), e))?;
        }
        for pair in &config.translation.external {
            translator
                .register_external(
                    LangPair::new(&pair.source, &pair.target, PairBackend::External),
                    &pair.endpoint,
                    Duration::from_millis(pair.timeout_ms),
                )
                .map_err(|e| StartupError::Config(ConfigError::Invalid(e.to_string())))?;
        }

        let emotion: Arc<dyn EmotionBackend> = match (&config.emotion.endpoint, &config.emotion.lexicon) {
            (Some(endpoint), _) => Arc::new(ExternalEmotion::new(
                endpoint.clone(),
                Duration::from_millis(config.emotion.timeout_ms),
            )),
            (None, Some(path)) => {
                Arc::new(EmotionLexicon::load(path).map_err(|e| asset_err("emotion lexicon", path.display(), e))?)
            }
            (None, None) => Arc::new(EmotionLexicon::bundled()),
        };

        let recognizer = config
            .recognizer
            .build()
            .map_err(|e| ConfigError::Invalid(format!("recognizer: {e}")))?;
        Ok(Self {
            recognizer,
            translator,
            emotion,
            dictionary: Arc::new(dictionary),
            summary: config.summary.clone(),
        })
    }
}
