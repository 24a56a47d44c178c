//! Wire protocol: JSON text frames, one envelope per frame.
//!
//! Field names here are the contract documented in `docs/protocol.md`.

use std::fmt;
use std::str::FromStr;

use axs_core::chunker::{AudioChunk, ChunkParams};
use axs_core::emotion::{emoji_for, EmotionLabel};
use axs_core::ids;
use axs_core::pipeline::{monotonic_ms, Participant, ParticipantPrefs, Role, SessionSettings};
use axs_core::recognizer::decode_pcm;
use axs_core::signgen::{AnimationSequence, ClipRef, Keyframe, FPS};
use axs_core::summarizer::SummaryRecord;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// `sender_id` on every envelope the gateway originates.
pub const GATEWAY_SENDER: &str = "gateway";

pub const MIN_SAMPLE_RATE: u32 = 8_000;
pub const MAX_SAMPLE_RATE: u32 = 48_000;
pub const MAX_CHUNK_SECONDS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageType {
    Join,
    Joined,
    Presence,
    AudioChunk,
    TextMessage,
    Transcript,
    Translation,
    Emotion,
    SignSequence,
    Summary,
    RequestSummary,
    ReplayRequest,
    SetPrefs,
    Error,
}

impl MessageType {
    pub const ALL: [MessageType; 14] = [
        MessageType::Join,
        MessageType::Joined,
        MessageType::Presence,
        MessageType::AudioChunk,
        MessageType::TextMessage,
        MessageType::Transcript,
        MessageType::Translation,
        MessageType::Emotion,
        MessageType::SignSequence,
        MessageType::Summary,
        MessageType::RequestSummary,
        MessageType::ReplayRequest,
        MessageType::SetPrefs,
        MessageType::Error,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MessageType::Join => "join",
            MessageType::Joined => "joined",
            MessageType::Presence => "presence",
            MessageType::AudioChunk => "audio_chunk",
            MessageType::TextMessage => "text_message",
            MessageType::Transcript => "transcript",
            MessageType::Translation => "translation",
            MessageType::Emotion => "emotion",
            MessageType::SignSequence => "sign_sequence",
            MessageType::Summary => "summary",
            MessageType::RequestSummary => "request_summary",
            MessageType::ReplayRequest => "replay_request",
            MessageType::SetPrefs => "set_prefs",
            MessageType::Error => "error",
        }
    }

    /// Types a client may send.
    pub fn is_inbound(self) -> bool {
        matches!(
            self,
            MessageType::Join
                | MessageType::AudioChunk
                | MessageType::TextMessage
                | MessageType::RequestSummary
                | MessageType::ReplayRequest
                | MessageType::SetPrefs
        )
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MessageType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        MessageType::ALL.into_iter().find(|t| t.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub session_id: String,
    #[serde(default)]
    pub sender_id: String,
    #[serde(default)]
    pub event_id: String,
    /// Sender's monotonic clock; display sync only, never used for KPIs.
    #[serde(default)]
    pub ts_ms: f64,
    #[serde(default)]
    pub payload: Value,
}

impl Envelope {
    /// A gateway-originated envelope.
    pub fn server(kind: MessageType, session_id: &str, payload: impl Serialize) -> Self {
        Self {
            kind: kind.as_str().to_owned(),
            session_id: session_id.to_owned(),
            sender_id: GATEWAY_SENDER.to_owned(),
            event_id: ids::new_id(),
            ts_ms: monotonic_ms(),
            payload: serde_json::to_value(payload).expect("payload types serialize"),
        }
    }

    pub fn message_type(&self) -> Option<MessageType> {
        self.kind.parse().ok()
    }

    pub fn payload_as<T: DeserializeOwned>(&self) -> Result<T, serde_json::Error> {
        T::deserialize(&self.payload)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("envelopes serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("{0}")]
    Malformed(String),
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("message type {0:?} is only sent by the gateway")]
    OutboundOnly(String),
}

impl ProtocolError {
    pub fn code(&self) -> &'static str {
        match self {
            ProtocolError::Malformed(_) => codes::MALFORMED_PAYLOAD,
            ProtocolError::UnknownType(_) | ProtocolError::OutboundOnly(_) => codes::UNKNOWN_TYPE,
        }
    }
}

/// Error codes carried in `error` envelopes and close frames.
pub mod codes {
    pub const UNKNOWN_TYPE: &str = "UNKNOWN_TYPE";
    pub const MALFORMED_PAYLOAD: &str = "MALFORMED_PAYLOAD";
    pub const QUEUE_FULL: &str = "QUEUE_FULL";
    pub const SLOW_CONSUMER: &str = "SLOW_CONSUMER";
    pub const JOIN_TIMEOUT: &str = "JOIN_TIMEOUT";
    pub const NOT_JOINED: &str = "NOT_JOINED";
    pub const ALREADY_JOINED: &str = "ALREADY_JOINED";
    pub const VIEWER_CANNOT_SPEAK: &str = "VIEWER_CANNOT_SPEAK";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct JoinPayload {
    pub display_name: String,
    pub role: Role,
    pub prefs: ParticipantPrefs,
    /// Applied only when this join creates the session.
    pub settings: Option<SessionSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AudioChunkPayload {
    pub seq: u64,
    pub start_time: f64,
    pub duration: f64,
    /// Real audio in the chunk; defaults to `duration`.
    #[serde(default)]
    pub content_duration: Option<f64>,
    pub sample_rate: u32,
    /// Little-endian 16-bit mono PCM, base64.
    pub audio_b64: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_text: Option<String>,
}

impl AudioChunkPayload {
    /// Checks the chunk geometry and decodes its PCM.
    pub fn into_chunk(self, session_id: &str, speaker_id: &str) -> Result<AudioChunk, ProtocolError> {
        let bad = |m: String| Err(ProtocolError::Malformed(m));
        if !(MIN_SAMPLE_RATE..=MAX_SAMPLE_RATE).contains(&self.sample_rate) {
            return bad(format!(
                "sample_rate {} outside [{MIN_SAMPLE_RATE}, {MAX_SAMPLE_RATE}]",
                self.sample_rate
            ));
        }
        if !(self.duration > 0.0 && self.duration <= MAX_CHUNK_SECONDS) {
            return bad(format!("duration {} outside (0, {MAX_CHUNK_SECONDS}]", self.duration));
        }
        if !(self.start_time >= 0.0 && self.start_time.is_finite()) {
            return bad(format!("start_time {} must be finite and non-negative", self.start_time));
        }
        let content = self.content_duration.unwrap_or(self.duration);
        if !(content > 0.0 && content <= self.duration + 1e-9) {
            return bad(format!("content_duration {content} outside (0, duration]"));
        }
        let Some(samples) = decode_pcm(&self.audio_b64) else {
            return bad("audio_b64 is not base64 16-bit PCM".into());
        };
        let expected = (self.duration * self.sample_rate as f64).round() as usize;
        if samples.len().abs_diff(expected) > 1 {
            return bad(format!(
                "{} samples for a {} s chunk at {} Hz",
                samples.len(),
                self.duration,
                self.sample_rate
            ));
        }
        Ok(AudioChunk {
            session_id: session_id.to_owned(),
            speaker_id: speaker_id.to_owned(),
            seq: self.seq,
            start_time: self.start_time,
            duration: self.duration,
            content_duration: content,
            sample_rate: self.sample_rate,
            samples,
            oracle_text: self.oracle_text,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextMessagePayload {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RequestSummaryPayload {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayRequestPayload {
    /// Most recent sequence when absent.
    pub sequence_id: Option<String>,
    /// The requester's signing speed when absent.
    pub speed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SetPrefsPayload {
    pub signing_speed: Option<f64>,
    pub language: Option<String>,
    pub emoji_enabled: Option<bool>,
    pub signing_enabled: Option<bool>,
    pub inline_frames: Option<bool>,
}

impl SetPrefsPayload {
    pub fn apply(&self, prefs: &ParticipantPrefs) -> ParticipantPrefs {
        let mut out = prefs.clone();
        if let Some(v) = self.signing_speed {
            out.signing_speed = v;
        }
        if let Some(v) = &self.language {
            out.language = v.clone();
        }
        if let Some(v) = self.emoji_enabled {
            out.emoji_enabled = v;
        }
        if let Some(v) = self.signing_enabled {
            out.signing_enabled = v;
        }
        if let Some(v) = self.inline_frames {
            out.inline_frames = v;
        }
        out
    }
}

/// A decoded inbound message.
#[derive(Debug, Clone, PartialEq)]
pub enum Inbound {
    Join(JoinPayload),
    AudioChunk(AudioChunkPayload),
    TextMessage(TextMessagePayload),
    RequestSummary(RequestSummaryPayload),
    ReplayRequest(ReplayRequestPayload),
    SetPrefs(SetPrefsPayload),
}

fn typed<T: DeserializeOwned>(kind: MessageType, payload: &Value) -> Result<T, ProtocolError> {
    let payload = if payload.is_null() {
        &Value::Object(Default::default())
    } else {
        payload
    };
    T::deserialize(payload).map_err(|e| ProtocolError::Malformed(format!("{kind} payload: {e}")))
}

/// Decodes one text frame. The type is checked before the rest of the
/// envelope so an unknown type is reported as such even if other fields
/// are also wrong.
pub fn parse_inbound(text: &str) -> Result<(Envelope, Inbound), ProtocolError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(format!("not JSON: {e}")))?;
    let kind = match value.get("type") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(ProtocolError::Malformed("\"type\" must be a string".into())),
        None if value.is_object() => return Err(ProtocolError::Malformed("missing \"type\"".into())),
        None => return Err(ProtocolError::Malformed("envelope must be a JSON object".into())),
    };
    let message_type: MessageType = kind.parse().map_err(|_| ProtocolError::UnknownType(kind.clone()))?;
    if !message_type.is_inbound() {
        return Err(ProtocolError::OutboundOnly(kind));
    }
    let envelope: Envelope = serde_json::from_value(value).map_err(|e| ProtocolError::Malformed(format!("envelope: {e}")))?;
    if !envelope.ts_ms.is_finite() {
        return Err(ProtocolError::Malformed("ts_ms must be finite".into()));
    }
    let p = &envelope.payload;
    let inbound = match message_type {
        MessageType::Join => Inbound::Join(typed(message_type, p)?),
        MessageType::AudioChunk => Inbound::AudioChunk(typed(message_type, p)?),
        MessageType::TextMessage => Inbound::TextMessage(typed(message_type, p)?),
        MessageType::RequestSummary => Inbound::RequestSummary(typed(message_type, p)?),
        MessageType::ReplayRequest => Inbound::ReplayRequest(typed(message_type, p)?),
        MessageType::SetPrefs => Inbound::SetPrefs(typed(message_type, p)?),
        _ => unreachable!("outbound types rejected above"),
    };
    Ok((envelope, inbound))
}

// Outbound payloads.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinedPayload {
    pub session_id: String,
    pub participant_id: String,
    pub token: String,
    pub settings: SessionSettings,
    pub participants: Vec<Participant>,
    pub dictionary_version: String,
    pub chunk: ChunkParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresenceEvent {
    Joined,
    Left,
    Updated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresencePayload {
    pub event: PresenceEvent,
    pub participant_id: String,
    pub participants: Vec<Participant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptPayload {
    pub speaker_id: String,
    /// Set on final transcripts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utterance_id: Option<String>,
    /// Set on partial transcripts: the chunk this hypothesis came from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunk_seq: Option<u64>,
    pub text: String,
    #[serde(rename = "final")]
    pub is_final: bool,
    pub t0: f64,
    pub t1: f64,
    pub confidence: f32,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationPayload {
    pub utterance_id: String,
    pub speaker_id: String,
    pub source_language: String,
    pub target_language: String,
    pub source_text: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionPayload {
    pub utterance_id: String,
    pub speaker_id: String,
    pub class: String,
    pub confidence: f64,
    pub emoji: String,
}

impl EmotionPayload {
    pub fn new(label: &EmotionLabel, speaker_id: &str) -> Self {
        Self {
            utterance_id: label.utterance_id.clone(),
            speaker_id: speaker_id.to_owned(),
            class: label.class.as_str().to_owned(),
            confidence: label.confidence,
            emoji: emoji_for(label).to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignSequencePayload {
    pub sequence_id: String,
    pub utterance_id: String,
    pub speaker_id: String,
    pub speed: f64,
    pub fps: f64,
    pub transition_frames: usize,
    pub frame_count: usize,
    pub duration_s: f64,
    pub dictionary_version: String,
    /// Clip references, in playback order.
    pub clips: Vec<ClipRef>,
    /// Timed keyframes, present only for participants who asked for them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<Vec<Keyframe>>,
    pub replay: bool,
}

impl SignSequencePayload {
    pub fn new(seq: &AnimationSequence, speaker_id: &str, inline_frames: bool, replay: bool) -> Self {
        Self {
            sequence_id: seq.sequence_id.clone(),
            utterance_id: seq.utterance_id.clone(),
            speaker_id: speaker_id.to_owned(),
            speed: seq.speed,
            fps: FPS,
            transition_frames: seq.transition_frames,
            frame_count: seq.frame_count(),
            duration_s: seq.total_duration(),
            dictionary_version: format!("{:016x}", seq.dictionary_version),
            clips: seq.clip_refs(),
            frames: inline_frames.then(|| seq.frames()),
            replay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryTrigger {
    Scheduled,
    OnDemand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryPayload {
    pub trigger: SummaryTrigger,
    pub window_start_s: f64,
    pub window_end_s: f64,
    pub language: String,
    pub key_points: Vec<String>,
    pub decisions: Vec<String>,
    pub action_items: Vec<String>,
}

impl SummaryPayload {
    pub fn new(record: SummaryRecord, trigger: SummaryTrigger) -> Self {
        Self {
            trigger,
            window_start_s: record.window.0,
            window_end_s: record.window.1,
            language: record.language,
            key_points: record.key_points,
            decisions: record.decisions,
            action_items: record.action_items,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: String,
    pub message: String,
    /// `event_id` of the inbound envelope that caused the error, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_event_id: Option<String>,
    /// Whether resending the same event later can succeed.
    pub retryable: bool,
}

impl ErrorPayload {
    pub fn new(code: &str, message: impl Into<String>, ref_event_id: Option<&str>) -> Self {
        Self {
            code: code.to_owned(),
            message: message.into(),
            ref_event_id: ref_event_id.filter(|s| !s.is_empty()).map(str::to_owned),
            retryable: matches!(code, codes::QUEUE_FULL | "BACKEND_TIMEOUT" | "BACKEND_UNAVAILABLE"),
        }
    }
}
