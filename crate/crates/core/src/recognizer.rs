//! Speech recognition backends.
//!
//! [`MockRecognizer`] echoes the chunk's `oracle_text` test channel, which
//! makes every end-to-end run deterministic. [`ExternalRecognizer`] posts the
//! PCM to a model server:
//!
//! ```text
//! POST /recognize  {"audio_b64": "...", "sample_rate": 16000, "language_hint": "en"}
//!               -> {"text": "hello team", "confidence": 0.91}
//! ```

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{http, BackendError};
use crate::chunker::{AudioChunk, TranscriptSegment};

#[async_trait]
pub trait Recognizer: Send + Sync {
    /// Transcribes one chunk. The returned segment spans exactly the chunk's
    /// time range and is never final at this layer.
    async fn recognize(&self, chunk: &AudioChunk) -> Result<TranscriptSegment, BackendError>;

    fn name(&self) -> &'static str;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RecognizerBackend {
    #[default]
    Mock,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecognizerConfig {
    pub backend: RecognizerBackend,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub language_hint: Option<String>,
}

impl Default for RecognizerConfig {
    fn default() -> Self {
        Self {
            backend: RecognizerBackend::Mock,
            endpoint: None,
            timeout_ms: 1500,
            language_hint: None,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("timeout_ms must be positive")]
    ZeroTimeout,
    #[error("the external recognizer needs an endpoint")]
    MissingEndpoint,
    #[error("the mock recognizer takes no endpoint")]
    UnexpectedEndpoint,
}

impl RecognizerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.timeout_ms == 0 {
            return Err(ConfigError::ZeroTimeout);
        }
        match (self.backend, &self.endpoint) {
            (RecognizerBackend::External, None) => Err(ConfigError::MissingEndpoint),
            (RecognizerBackend::Mock, Some(_)) => Err(ConfigError::UnexpectedEndpoint),
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn Recognizer>, ConfigError> {
        self.validate()?;
        Ok(match self.backend {
            RecognizerBackend::Mock => Arc::new(MockRecognizer),
            RecognizerBackend::External => Arc::new(ExternalRecognizer::new(
                self.endpoint.clone().unwrap_or_default(),
                Duration::from_millis(self.timeout_ms),
                self.language_hint.clone(),
            )),
        })
    }
}

/// Deterministic recogniser: returns the chunk's oracle text with full
/// confidence, or an empty (silent) segment when there is none.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockRecognizer;

impl MockRecognizer {
    pub fn transcribe(chunk: &AudioChunk) -> TranscriptSegment {
        match chunk.oracle_text.as_deref() {
            Some(text) if !text.trim().is_empty() => TranscriptSegment::for_chunk(chunk, text, 1.0),
            _ => TranscriptSegment::for_chunk(chunk, "", 0.0),
        }
    }
}

#[async_trait]
impl Recognizer for MockRecognizer {
    async fn recognize(&self, chunk: &AudioChunk) -> Result<TranscriptSegment, BackendError> {
        Ok(Self::transcribe(chunk))
    }

    fn name(&self) -> &'static str {
        "mock"
    }
}

#[derive(Debug, Serialize)]
struct RecognizeRequest<'a> {
    audio_b64: String,
    sample_rate: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    language_hint: Option<&'a str>,
}

#[derive(Debug, Deserialize)]
struct RecognizeResponse {
    text: String,
    confidence: f32,
}

/// HTTP client for a model-serving recogniser.
pub struct ExternalRecognizer {
    endpoint: String,
    timeout: Duration,
    language_hint: Option<String>,
    client: reqwest::Client,
}

impl ExternalRecognizer {
    pub fn new(endpoint: impl Into<String>, timeout: Duration, language_hint: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout,
            language_hint,
            client: http::client(timeout),
        }
    }
}

/// Little-endian 16-bit PCM, base64 encoded.
pub fn encode_pcm(samples: &[i16]) -> String {
    let bytes: Vec<u8> = samples.iter().flat_map(|s| s.to_le_bytes()).collect();
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

/// Inverse of [`encode_pcm`]; `None` on bad base64 or an odd byte count.
pub fn decode_pcm(b64: &str) -> Option<Vec<i16>> {
    let bytes = base64::engine::general_purpose::STANDARD.decode(b64).ok()?;
    if bytes.len() % 2 != 0 {
        return None;
    }
    Some(bytes.chunks_exact(2).map(|b| i16::from_le_bytes([b[0], b[1]])).collect())
}

#[async_trait]
impl Recognizer for ExternalRecognizer {
    async fn recognize(&self, chunk: &AudioChunk) -> Result<TranscriptSegment, BackendError> {
        let request = RecognizeRequest {
            audio_b64: encode_pcm(&chunk.samples),
            sample_rate: chunk.sample_rate,
            language_hint: self.language_hint.as_deref(),
        };
        let reply: RecognizeResponse =
            http::post_json(&self.client, &self.endpoint, "/recognize", self.timeout, &request).await?;
        if !(0.0..=1.0).contains(&reply.confidence) {
            return Err(BackendError::MalformedResponse(format!(
                "confidence {} outside [0, 1]",
                reply.confidence
            )));
        }
        Ok(TranscriptSegment::for_chunk(chunk, reply.text, reply.confidence))
    }

    fn name(&self) -> &'static str {
        "external"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunker::{chunk_stream, ChunkParams};

    fn chunk(text: Option<&str>) -> AudioChunk {
        let mut c = chunk_stream(&vec![0; 16_000], 16_000, ChunkParams::default(), "s", "a")
            .unwrap()
            .remove(0);
        c.oracle_text = text.map(str::to_owned);
        c
    }

    #[tokio::test]
    async fn mock_echoes_oracle() {
        let seg = MockRecognizer.recognize(&chunk(Some("good morning"))).await.unwrap();
        assert_eq!(seg.text, "good morning");
        assert_eq!(seg.confidence, 1.0);
        assert_eq!((seg.t0, seg.t1), (0.0, 1.0));
        assert!(!seg.is_final);
    }

    #[tokio::test]
    async fn mock_without_oracle_is_silent() {
        let seg = MockRecognizer.recognize(&chunk(None)).await.unwrap();
        assert!(seg.is_silent());
        assert_eq!(seg.text, "");
    }

    #[test]
    fn mock_is_deterministic() {
        let c = chunk(Some("budget review"));
        assert_eq!(MockRecognizer::transcribe(&c), MockRecognizer::transcribe(&c));
    }

    #[test]
    fn config_rules() {
        assert!(RecognizerConfig::default().validate().is_ok());
        let ext = RecognizerConfig {
            backend: RecognizerBackend::External,
            ..Default::default()
        };
        assert_eq!(ext.validate(), Err(ConfigError::MissingEndpoint));
        let zero = RecognizerConfig {
            timeout_ms: 0,
            ..Default::default()
        };
        assert_eq!(zero.validate(), Err(ConfigError::ZeroTimeout));
    }

    #[test]
    fn pcm_roundtrip() {
        let samples = vec![0, 1, -1, i16::MAX, i16::MIN];
        assert_eq!(decode_pcm(&encode_pcm(&samples)).unwrap(), samples);
        assert!(decode_pcm("AA==").is_none());
        assert!(decode_pcm("not base64!").is_none());
    }
}
