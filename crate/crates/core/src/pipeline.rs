//! Session state, event routing and the latency ledger.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backpressure::Stage;
use crate::chunker::{TranscriptSegment, Utterance};
use crate::ids;
use crate::signgen::{self, ReplayBuffer};
use crate::stats::{self, Distribution};
use crate::translator::{self, Translation};

pub const MAX_PARTICIPANTS: usize = 8;
pub const DEFAULT_SUMMARY_INTERVAL_S: f64 = 900.0;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PipelineError {
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error("session id {0} already in use")]
    DuplicateId(String),
    #[error("session {0} is full")]
    RoomFull(String),
    #[error("participant {0} already joined")]
    DuplicateParticipant(String),
    #[error("session {0} is closed")]
    SessionClosed(String),
    #[error("invalid participant prefs: {0}")]
    InvalidPrefs(String),
    #[error("speaker {speaker} sent seq {got} after {last}")]
    Reorder { speaker: String, last: u64, got: u64 },
}

impl PipelineError {
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::InvalidSettings(_) => "INVALID_SETTINGS",
            PipelineError::DuplicateId(_) => "DUPLICATE_ID",
            PipelineError::RoomFull(_) => "ROOM_FULL",
            PipelineError::DuplicateParticipant(_) => "DUPLICATE_PARTICIPANT",
            PipelineError::SessionClosed(_) => "SESSION_CLOSED",
            PipelineError::InvalidPrefs(_) => "INVALID_PREFS",
            PipelineError::Reorder { .. } => "REORDER_ERROR",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionSettings {
    pub source_language: String,
    pub target_language: String,
    pub signing_enabled: bool,
    pub emoji_overlay: bool,
    pub summary_interval_s: f64,
    /// Sign the translated text instead of the source text.
    pub sign_from_translation: bool,
    pub replay_capacity: usize,
}

impl Default for SessionSettings {
    fn default() -> Self {
        Self {
            source_language: "en".into(),
            target_language: "fr".into(),
            signing_enabled: true,
            emoji_overlay: true,
            summary_interval_s: DEFAULT_SUMMARY_INTERVAL_S,
            sign_from_translation: false,
            replay_capacity: signgen::DEFAULT_REPLAY_CAPACITY,
        }
    }
}

impl SessionSettings {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::InvalidSettings(m.into()));
        if !self.summary_interval_s.is_finite() || self.summary_interval_s <= 0.0 {
            return bad("summary_interval_s must be positive");
        }
        if self.replay_capacity == 0 {
            return bad("replay_capacity must be positive");
        }
        if !translator::is_language_code(&self.source_language) || !translator::is_language_code(&self.target_language) {
            return bad("language codes must be 2-3 lowercase letters");
        }
        Ok(())
    }

    pub fn translates(&self) -> bool {
        self.target_language != self.source_language
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    #[default]
    Speaker,
    Viewer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParticipantPrefs {
    pub signing_speed: f64,
    pub language: String,
    pub emoji_enabled: bool,
    pub signing_enabled: bool,
    /// Ship keyframes inside sign messages instead of clip references.
    pub inline_frames: bool,
}

impl Default for ParticipantPrefs {
    fn default() -> Self {
        Self {
            signing_speed: 1.0,
            language: "en".into(),
            emoji_enabled: false,
            signing_enabled: true,
            inline_frames: false,
        }
    }
}

impl ParticipantPrefs {
    pub fn validate(&self) -> Result<(), PipelineError> {
        signgen::check_speed(self.signing_speed).map_err(|e| PipelineError::InvalidPrefs(e.to_string()))?;
        if !translator::is_language_code(&self.language) {
            return Err(PipelineError::InvalidPrefs(format!("bad language code {:?}", self.language)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub participant_id: String,
    pub display_name: String,
    pub role: Role,
    pub prefs: ParticipantPrefs,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipToken {
    pub session_id: String,
    pub participant_id: String,
    pub token: String,
}

/// Rejects any per-speaker sequence number that does not strictly increase.
#[derive(Debug, Clone, Default)]
pub struct OrderingGuard {
    last: HashMap<String, u64>,
}

impl OrderingGuard {
    pub fn check(&mut self, speaker: &str, seq: u64) -> Result<(), PipelineError> {
        match self.last.get_mut(speaker) {
            Some(last) if seq <= *last => Err(PipelineError::Reorder {
                speaker: speaker.to_owned(),
                last: *last,
                got: seq,
            }),
            Some(last) => {
                *last = seq;
                Ok(())
            }
            None => {
                self.last.insert(speaker.to_owned(), seq);
                Ok(())
            }
        }
    }

    /// Same verdict as [`OrderingGuard::check`] without recording `seq`.
    pub fn peek(&self, speaker: &str, seq: u64) -> Result<(), PipelineError> {
        match self.last.get(speaker) {
            Some(&last) if seq <= last => Err(PipelineError::Reorder {
                speaker: speaker.to_owned(),
                last,
                got: seq,
            }),
            _ => Ok(()),
        }
    }

    pub fn last(&self, speaker: &str) -> Option<u64> {
        self.last.get(speaker).copied()
    }

    pub fn forget(&mut self, speaker: &str) {
        self.last.remove(speaker);
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    pub session_id: String,
    pub settings: SessionSettings,
    pub created_at_ms: u64,
    participants: Vec<Participant>,
    pub replay_buffer: ReplayBuffer,
    ordering: OrderingGuard,
    closed: bool,
}

fn wall_clock_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl Session {
    pub fn new(session_id: impl Into<String>, settings: SessionSettings) -> Result<Self, PipelineError> {
        settings.validate()?;
        Ok(Self {
            session_id: session_id.into(),
            replay_buffer: ReplayBuffer::new(settings.replay_capacity),
            settings,
            created_at_ms: wall_clock_ms(),
            participants: Vec::new(),
            ordering: OrderingGuard::default(),
            closed: false,
        })
    }

    pub fn participants(&self) -> &[Participant] {
        &self.participants
    }

    pub fn participant(&self, id: &str) -> Option<&Participant> {
        self.participants.iter().find(|p| p.participant_id == id)
    }

    pub fn participant_mut(&mut self, id: &str) -> Option<&mut Participant> {
        self.participants.iter_mut().find(|p| p.participant_id == id)
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    fn ensure_live(&self) -> Result<(), PipelineError> {
        if self.closed {
            Err(PipelineError::SessionClosed(self.session_id.clone()))
        } else {
            Ok(())
        }
    }

    pub fn join(&mut self, p: Participant) -> Result<MembershipToken, PipelineError> {
        self.ensure_live()?;
        p.prefs.validate()?;
        if self.participant(&p.participant_id).is_some() {
            return Err(PipelineError::DuplicateParticipant(p.participant_id));
        }
        if self.participants.len() >= MAX_PARTICIPANTS {
            return Err(PipelineError::RoomFull(self.session_id.clone()));
        }
        let token = MembershipToken {
            session_id: self.session_id.clone(),
            participant_id: p.participant_id.clone(),
            token: ids::new_id(),
        };
        self.participants.push(p);
        Ok(token)
    }

    /// Removes a member; returns whether the room is now empty.
    pub fn leave(&mut self, participant_id: &str) -> bool {
        self.participants.retain(|p| p.participant_id != participant_id);
        self.ordering.forget(participant_id);
        self.participants.is_empty()
    }

    /// Per-speaker ordering gate applied at ingress.
    pub fn check_order(&mut self, speaker: &str, seq: u64) -> Result<(), PipelineError> {
        self.ordering.check(speaker, seq)
    }

    /// Ordering verdict for `seq` without consuming it, so a rejected
    /// event can be resent under the same number.
    pub fn peek_order(&self, speaker: &str, seq: u64) -> Result<(), PipelineError> {
        self.ordering.peek(speaker, seq)
    }
}

pub fn join_session(session: &mut Session, p: Participant) -> Result<MembershipToken, PipelineError> {
    session.join(p)
}

/// Live sessions by id.
#[derive(Debug, Default)]
pub struct SessionRegistry {
    sessions: HashMap<String, Session>,
}

impl SessionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers an empty session; a fresh id is minted unless one is given.
    pub fn create_session(&mut self, settings: SessionSettings, id: Option<String>) -> Result<&mut Session, PipelineError> {
        let id = id.unwrap_or_else(ids::new_id);
        if self.sessions.contains_key(&id) {
            return Err(PipelineError::DuplicateId(id));
        }
        let session = Session::new(id.clone(), settings)?;
        Ok(self.sessions.entry(id).or_insert(session))
    }

    pub fn get(&self, id: &str) -> Option<&Session> {
        self.sessions.get(id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut Session> {
        self.sessions.get_mut(id)
    }

    pub fn remove(&mut self, id: &str) -> Option<Session> {
        let mut s = self.sessions.remove(id)?;
        s.close();
        Some(s)
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PipelineEvent {
    Segment(TranscriptSegment),
    Utterance(Utterance),
    Translation(Translation),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Submission {
    /// Live caption update, no downstream work.
    Display(TranscriptSegment),
    Translate(Utterance),
    Emotion(Utterance),
    Signgen {
        utterance_id: String,
        speaker_id: String,
        text: String,
    },
    Summary(Utterance),
    DisplayTranslation(Translation),
}

impl Submission {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Submission::Display(_) | Submission::DisplayTranslation(_) => None,
            Submission::Translate(_) => Some(Stage::Translation),
            Submission::Emotion(_) => Some(Stage::Emotion),
            Submission::Signgen { .. } => Some(Stage::Signgen),
            Submission::Summary(_) => Some(Stage::Summary),
        }
    }
}

/// Fans a pipeline event out to the stages the session settings call for.
pub fn route_event(session: &Session, event: PipelineEvent) -> Result<Vec<Submission>, PipelineError> {
    session.ensure_live()?;
    let s = &session.settings;
    Ok(match event {
        PipelineEvent::Segment(seg) => vec![Submission::Display(seg)],
        PipelineEvent::Utterance(u) => {
            let mut out = Vec::with_capacity(4);
            if s.translates() {
                out.push(Submission::Translate(u.clone()));
            }
            out.push(Submission::Emotion(u.clone()));
            if s.signing_enabled && !(s.sign_from_translation && s.translates()) {
                out.push(Submission::Signgen {
                    utterance_id: u.utterance_id.clone(),
                    speaker_id: u.speaker_id.clone(),
                    text: u.text.clone(),
                });
            }
            out.push(Submission::Summary(u));
            out
        }
        PipelineEvent::Translation(t) => {
            let mut out = Vec::with_capacity(2);
            if s.signing_enabled && s.sign_from_translation {
                out.push(Submission::Signgen {
                    utterance_id: t.utterance_id.clone(),
                    speaker_id: String::new(),
                    text: t.target_text.clone(),
                });
            }
            out.push(Submission::DisplayTranslation(t));
            out
        }
    })
}

/// Milliseconds on a process-wide monotonic clock.
pub fn monotonic_ms() -> f64 {
    static EPOCH: OnceLock<Instant> = OnceLock::new();
    EPOCH.get_or_init(Instant::now).elapsed().as_secs_f64() * 1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLatency {
    pub stage: Stage,
    pub event_id: String,
    pub enqueue_ms: f64,
    pub dequeue_ms: f64,
    pub complete_ms: f64,
}

impl StageLatency {
    pub fn total_ms(&self) -> f64 {
        self.complete_ms - self.enqueue_ms
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("timestamps for {event_id} are not monotone: {enqueue} / {dequeue} / {complete}")]
pub struct NonMonotonic {
    pub event_id: String,
    pub enqueue: f64,
    pub dequeue: f64,
    pub complete: f64,
}

/// Latency budget per stage, in ms.
pub fn budget_ms(stage: Stage) -> Option<f64> {
    match stage {
        Stage::Transcription | Stage::Translation => Some(2000.0),
        Stage::Emotion => Some(200.0),
        Stage::Signgen | Stage::Summary => None,
    }
}

pub const END_TO_END_BUDGET_MS: f64 = 2000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageKpi {
    pub stage: Stage,
    pub latency: Distribution,
    pub queue_wait_p95_ms: f64,
    pub errors: u64,
    pub budget_ms: Option<f64>,
    /// p95 under budget; `None` for stages without one.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub stages: Vec<StageKpi>,
    pub end_to_end: Option<Distribution>,
    pub rejected_timestamps: u64,
}

impl KpiReport {
    pub fn stage(&self, stage: Stage) -> Option<&StageKpi> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    pub fn all_pass(&self) -> bool {
        self.stages.iter().all(|s| s.pass != Some(false))
    }
}

#[derive(Debug, Default)]
struct StageSamples {
    total: Vec<f64>,
    wait: Vec<f64>,
    errors: u64,
}

#[derive(Debug, Default)]
struct LedgerInner {
    stages: HashMap<Stage, StageSamples>,
    end_to_end: Vec<f64>,
    rejected: u64,
    recent: Vec<StageLatency>,
}

/// Concurrent latency ledger. Samples are kept compactly; only the most
/// recent full records are retained for inspection.
#[derive(Debug, Default)]
pub struct LatencyLedger {
    inner: Mutex<LedgerInner>,
}

const RECENT_RECORDS: usize = 256;

impl LatencyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, rec: StageLatency) -> Result<(), NonMonotonic> {
        let ok = rec.enqueue_ms <= rec.dequeue_ms
            && rec.dequeue_ms <= rec.complete_ms
            && rec.enqueue_ms.is_finite()
            && rec.complete_ms.is_finite();
        let mut inner = self.inner.lock();
        if !ok {
            inner.rejected += 1;
            return Err(NonMonotonic {
                event_id: rec.event_id,
                enqueue: rec.enqueue_ms,
                dequeue: rec.dequeue_ms,
                complete: rec.complete_ms,
            });
        }
        let entry = inner.stages.entry(rec.stage).or_default();
        entry.total.push(rec.total_ms());
        entry.wait.push(rec.dequeue_ms - rec.enqueue_ms);
        if inner.recent.len() == RECENT_RECORDS {
            inner.recent.remove(0);
        }
        inner.recent.push(rec);
        Ok(())
    }

    pub fn record_error(&self, stage: Stage) {
        self.inner.lock().stages.entry(stage).or_default().errors += 1;
    }

    pub fn record_end_to_end(&self, ms: f64) {
        if ms.is_finite() && ms >= 0.0 {
            self.inner.lock().end_to_end.push(ms);
        }
    }

    pub fn recent(&self) -> Vec<StageLatency> {
        self.inner.lock().recent.clone()
    }

    pub fn samples(&self, stage: Stage) -> Vec<f64> {
        self.inner
            .lock()
            .stages
            .get(&stage)
            .map(|s| s.total.clone())
            .unwrap_or_default()
    }

    pub fn reset(&self) {
        *self.inner.lock() = LedgerInner::default();
    }

    pub fn kpi_report(&self) -> KpiReport {
        let inner = self.inner.lock();
        let stages = Stage::ALL
            .iter()
            .filter_map(|&stage| {
                let s = inner.stages.get(&stage)?;
                let latency = stats::distribution(&s.total)?;
                let mut wait = s.wait.clone();
                let budget = budget_ms(stage);
                Some(StageKpi {
                    stage,
                    queue_wait_p95_ms: stats::percentile(&mut wait, 95.0).unwrap_or(0.0),
                    errors: s.errors,
                    budget_ms: budget,
                    pass: budget.map(|b| latency.p95 < b),
                    latency,
                })
            })
            .collect();
        KpiReport {
            stages,
            end_to_end: stats::distribution(&inner.end_to_end),
            rejected_timestamps: inner.rejected,
        }
    }
}

pub fn record_latency(
    ledger: &LatencyLedger,
    stage: Stage,
    event_id: &str,
    enqueue: f64,
    dequeue: f64,
    complete: f64,
) -> Result<(), NonMonotonic> {
    ledger.record(StageLatency {
        stage,
        event_id: event_id.to_owned(),
        enqueue_ms: enqueue,
        dequeue_ms: dequeue,
        complete_ms: complete,
    })
}

pub fn kpi_report(ledger: &LatencyLedger) -> KpiReport {
    ledger.kpi_report()
}

/// Distinct participant ids; used by tests that race joins.
pub fn member_ids(session: &Session) -> HashSet<&str> {
    session.participants.iter().map(|p| p.participant_id.as_str()).collect()
}
