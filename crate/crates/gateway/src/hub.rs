//! Live sessions ("rooms") and their stage workers.
//!
//! Each room owns one bounded queue per pipeline stage and one worker task
//! per queue, so a stage processes a session's events strictly in order
//! while different sessions run concurrently. Room membership and session
//! state sit behind a short-lived mutex; lock order is hub, then room.
//! Everything sent to a connection goes through its [`Link`], whose
//! bounded outbound queue is never awaited: a subscriber that keeps it full
//! is cut off instead of stalling the stage.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axs_core::backpressure::{Admission, BackpressureConfig, RejectionTracker, Stage, StageQueue, Verdict};
use axs_core::chunker::{AudioChunk, ChunkParams, Utterance, UtteranceAssembler};
use axs_core::ids;
use axs_core::pipeline::{
    monotonic_ms, route_event, Participant, ParticipantPrefs, PipelineError, PipelineEvent, Session, SessionSettings,
    StageLatency, Submission,
};
use axs_core::signgen::{assemble_animation, tokenize_to_glosses, SignError};
use axs_core::summarizer::{extract_summary, summarize_multilingual, SessionTranscript, SummaryRecord, Window};
use axum::extract::ws::Utf8Bytes;
use parking_lot::Mutex;
use tokio::sync::{mpsc, watch};

use crate::config::GatewayConfig;
use crate::metrics::Metrics;
use crate::protocol::{
    codes, EmotionPayload, Envelope, ErrorPayload, JoinPayload, JoinedPayload, MessageType, PresenceEvent, PresencePayload,
    SignSequencePayload, SummaryPayload, SummaryTrigger, TranscriptPayload, TranslationPayload,
};
use crate::services::Services;

/// Why the gateway is closing a connection.
#[derive(Debug, Clone)]
pub struct CloseReason {
    pub code: u16,
    pub reason: &'static str,
    /// Error envelope written just before the close frame.
    pub notice: Option<Utf8Bytes>,
    /// Deliver frames already queued before the notice. Off when the
    /// close is because the peer stopped reading.
    pub flush: bool,
}

pub const CLOSE_JOIN_TIMEOUT: u16 = 4000;
pub const CLOSE_SLOW_CONSUMER: u16 = 4001;

impl CloseReason {
    pub fn with_error(code: u16, reason: &'static str, session_id: &str, message: &str) -> Self {
        let env = Envelope::server(MessageType::Error, session_id, ErrorPayload::new(reason, message, None));
        Self {
            code,
            reason,
            notice: Some(env.to_json().into()),
            flush: true,
        }
    }

    fn unflushed(mut self) -> Self {
        self.flush = false;
        self
    }
}

/// Outbound side of one connection.
pub struct Link {
    tx: mpsc::Sender<Utf8Bytes>,
    closer: watch::Sender<Option<CloseReason>>,
    failures: Mutex<RejectionTracker>,
    metrics: Arc<Metrics>,
}

impl Link {
    pub fn new(
        capacity: usize,
        grace: u32,
        metrics: Arc<Metrics>,
    ) -> (Arc<Self>, mpsc::Receiver<Utf8Bytes>, watch::Receiver<Option<CloseReason>>) {
        let (tx, rx) = mpsc::channel(capacity);
        let (closer, close_rx) = watch::channel(None);
        let link = Arc::new(Self {
            tx,
            closer,
            failures: Mutex::new(RejectionTracker::new(grace)),
            metrics,
        });
        (link, rx, close_rx)
    }

    /// Queues a frame without waiting. A full queue counts against the
    /// slow-consumer grace; past it the connection is closed.
    pub fn send(&self, frame: Utf8Bytes) -> bool {
        match self.tx.try_send(frame) {
            Ok(()) => {
                self.failures.lock().record(false);
                self.metrics.envelope_out();
                true
            }
            Err(mpsc::error::TrySendError::Closed(_)) => false,
            Err(mpsc::error::TrySendError::Full(_)) => {
                self.metrics.send_failed();
                if self.failures.lock().record(true) == Verdict::Disconnect {
                    self.close(
                        CloseReason::with_error(CLOSE_SLOW_CONSUMER, codes::SLOW_CONSUMER, "", "outbound queue stayed full")
                            .unflushed(),
                    );
                }
                false
            }
        }
    }

    pub fn send_envelope(&self, env: &Envelope) -> bool {
        if env.kind == MessageType::Error.as_str() {
            if let Some(code) = env.payload.get("code").and_then(|c| c.as_str()) {
                self.metrics.error(code);
            }
        }
        self.send(env.to_json().into())
    }

    pub fn send_error(&self, session_id: &str, code: &str, message: impl Into<String>, ref_event_id: Option<&str>) {
        self.send_envelope(&Envelope::server(
            MessageType::Error,
            session_id,
            ErrorPayload::new(code, message, ref_event_id),
        ));
    }

    /// First close reason wins.
    pub fn close(&self, reason: CloseReason) {
        let reason_name = reason.reason;
        let changed = self.closer.send_if_modified(|cur| {
            if cur.is_none() {
                *cur = Some(reason);
                true
            } else {
                false
            }
        });
        if changed {
            self.metrics.disconnect(reason_name);
        }
    }

    pub fn is_closing(&self) -> bool {
        self.closer.borrow().is_some()
    }
}

/// Runtime knobs copied out of the configuration.
#[derive(Debug, Clone)]
pub struct HubSettings {
    pub chunk: ChunkParams,
    pub backpressure: BackpressureConfig,
    pub transition_frames: usize,
    pub summary_tick: Duration,
    pub default_session: SessionSettings,
}

impl From<&GatewayConfig> for HubSettings {
    fn from(c: &GatewayConfig) -> Self {
        Self {
            chunk: c.chunk,
            backpressure: c.backpressure.clone(),
            transition_frames: c.transition_frames,
            summary_tick: Duration::from_millis(c.summary_tick_ms),
            default_session: c.session.clone(),
        }
    }
}

struct Shared {
    services: Arc<Services>,
    metrics: Arc<Metrics>,
    settings: HubSettings,
}

pub struct Hub {
    shared: Arc<Shared>,
    rooms: Mutex<HashMap<String, Arc<Room>>>,
}

/// A successful join.
pub struct Membership {
    pub room: Arc<Room>,
    pub participant_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinError {
    pub code: &'static str,
    pub message: String,
}

impl From<PipelineError> for JoinError {
    fn from(e: PipelineError) -> Self {
        Self {
            code: e.code(),
            message: e.to_string(),
        }
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.:".contains(c))
}

impl Hub {
    pub fn new(services: Arc<Services>, metrics: Arc<Metrics>, settings: HubSettings) -> Self {
        Self {
            shared: Arc::new(Shared {
                services,
                metrics,
                settings,
            }),
            rooms: Mutex::new(HashMap::new()),
        }
    }

    pub fn metrics(&self) -> &Arc<Metrics> {
        &self.shared.metrics
    }

    pub fn services(&self) -> &Arc<Services> {
        &self.shared.services
    }

    pub fn session_count(&self) -> usize {
        self.rooms.lock().len()
    }

    pub fn room(&self, session_id: &str) -> Option<Arc<Room>> {
        self.rooms.lock().get(session_id).cloned()
    }

    /// Current queue depths summed over live rooms, in `Stage::ALL` order.
    pub fn queue_depths(&self) -> [usize; 5] {
        let rooms: Vec<Arc<Room>> = self.rooms.lock().values().cloned().collect();
        let mut out = [0; 5];
        for room in rooms {
            for (slot, depth) in out.iter_mut().zip(room.queues.depths()) {
                *slot += depth;
            }
        }
        out
    }

    /// Joins (creating the room if needed) and sends `joined` plus the
    /// presence update. An empty session id creates a fresh session; an
    /// empty sender id gets a minted participant id.
    pub fn join(
        &self,
        session_id: &str,
        sender_id: &str,
        payload: JoinPayload,
        link: &Arc<Link>,
    ) -> Result<Membership, JoinError> {
        let participant_id = if sender_id.is_empty() {
            ids::new_id()
        } else {
            sender_id.to_owned()
        };
        if !valid_id(&participant_id) || !(session_id.is_empty() || valid_id(session_id)) {
            return Err(JoinError {
                code: codes::MALFORMED_PAYLOAD,
                message: "ids must be 1-64 characters of [A-Za-z0-9-_.:]".into(),
            });
        }
        let participant = Participant {
            participant_id: participant_id.clone(),
            display_name: if payload.display_name.is_empty() {
                participant_id.clone()
            } else {
                payload.display_name
            },
            role: payload.role,
            prefs: payload.prefs,
        };
        let mut rooms = self.rooms.lock();
        let session_id = if session_id.is_empty() {
            ids::new_id()
        } else {
            session_id.to_owned()
        };
        let (room, created) = match rooms.get(&session_id) {
            Some(room) => (Arc::clone(room), false),
            None => {
                let settings = payload
                    .settings
                    .unwrap_or_else(|| self.shared.settings.default_session.clone());
                let session = Session::new(session_id.clone(), settings)?;
                (Room::open(session, Arc::clone(&self.shared)), true)
            }
        };
        room.admit(participant, link)?;
        if created {
            tracing::info!(session = %session_id, "session opened");
            rooms.insert(session_id, Arc::clone(&room));
        }
        Ok(Membership { room, participant_id })
    }

    /// Removes a member; the room is closed once empty.
    pub fn leave(&self, membership: &Membership) {
        let mut rooms = self.rooms.lock();
        if membership.room.depart(&membership.participant_id) {
            rooms.remove(&membership.room.id);
            membership.room.close();
            tracing::info!(session = %membership.room.id, "session closed");
        }
    }
}

struct Job<T> {
    item: T,
    event_id: String,
    enqueue_ms: f64,
    /// Arrival of the inbound event that ultimately caused this job.
    origin_ms: f64,
}

impl<T> Job<T> {
    fn new(item: T, event_id: String, origin_ms: f64) -> Self {
        Self {
            item,
            event_id,
            enqueue_ms: monotonic_ms(),
            origin_ms,
        }
    }

    fn follow<U>(&self, item: U, event_id: String) -> Job<U> {
        Job::new(item, event_id, self.origin_ms)
    }
}

enum SpeechJob {
    Chunk(AudioChunk),
    Text {
        speaker_id: String,
        text: String,
    },
    /// Finalise whatever the speaker left pending.
    Flush {
        speaker_id: String,
    },
}

struct SignJob {
    utterance_id: String,
    speaker_id: String,
    text: String,
}

enum SummaryJob {
    Accumulate(Utterance),
    OnDemand { requester: String, ref_event_id: String },
}

struct Queues {
    transcription: StageQueue<Job<SpeechJob>>,
    translation: StageQueue<Job<Utterance>>,
    emotion: StageQueue<Job<Utterance>>,
    signgen: StageQueue<Job<SignJob>>,
    summary: StageQueue<Job<SummaryJob>>,
}

impl Queues {
    fn new(c: &BackpressureConfig) -> Self {
        Self {
            transcription: StageQueue::for_stage(Stage::Transcription, c),
            translation: StageQueue::for_stage(Stage::Translation, c),
            emotion: StageQueue::for_stage(Stage::Emotion, c),
            signgen: StageQueue::for_stage(Stage::Signgen, c),
            summary: StageQueue::for_stage(Stage::Summary, c),
        }
    }

    fn depths(&self) -> [usize; 5] {
        [
            self.transcription.len(),
            self.translation.len(),
            self.emotion.len(),
            self.signgen.len(),
            self.summary.len(),
        ]
    }

    fn close(&self) {
        self.transcription.close();
        self.translation.close();
        self.emotion.close();
        self.signgen.close();
        self.summary.close();
    }
}

struct RoomState {
    session: Session,
    links: HashMap<String, Arc<Link>>,
    /// Members in join order, for deterministic fan-out.
    order: Vec<String>,
    /// Speaker of each buffered sign sequence, oldest first.
    sign_speakers: VecDeque<(String, String)>,
}

/// Outcome of offering an inbound event to a stage queue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Offer {
    Accepted,
    Rejected,
}

pub struct Room {
    pub id: String,
    state: Mutex<RoomState>,
    queues: Queues,
    epoch: Instant,
    shared: Arc<Shared>,
}

impl Room {
    fn open(session: Session, shared: Arc<Shared>) -> Arc<Self> {
        let room = Arc::new(Self {
            id: session.session_id.clone(),
            queues: Queues::new(&shared.settings.backpressure),
            state: Mutex::new(RoomState {
                session,
                links: HashMap::new(),
                order: Vec::new(),
                sign_speakers: VecDeque::new(),
            }),
            epoch: Instant::now(),
            shared,
        });
        tokio::spawn(transcription_worker(Arc::clone(&room)));
        tokio::spawn(translation_worker(Arc::clone(&room)));
        tokio::spawn(emotion_worker(Arc::clone(&room)));
        tokio::spawn(signgen_worker(Arc::clone(&room)));
        tokio::spawn(summary_worker(Arc::clone(&room)));
        room
    }

    fn metrics(&self) -> &Metrics {
        &self.shared.metrics
    }

    /// Seconds since the session opened.
    fn clock_s(&self) -> f64 {
        self.epoch.elapsed().as_secs_f64()
    }

    fn roster(state: &RoomState) -> Vec<Participant> {
        state.session.participants().to_vec()
    }

    fn envelope(&self, kind: MessageType, payload: impl serde::Serialize) -> Envelope {
        Envelope::server(kind, &self.id, payload)
    }

    fn admit(&self, participant: Participant, link: &Arc<Link>) -> Result<(), JoinError> {
        let mut state = self.state.lock();
        let token = state.session.join(participant.clone())?;
        let pid = participant.participant_id.clone();
        state.links.insert(pid.clone(), Arc::clone(link));
        state.order.push(pid.clone());
        let participants = Self::roster(&state);
        link.send_envelope(&self.envelope(
            MessageType::Joined,
            JoinedPayload {
                session_id: self.id.clone(),
                participant_id: pid.clone(),
                token: token.token,
                settings: state.session.settings.clone(),
                participants: participants.clone(),
                dictionary_version: format!("{:016x}", self.shared.services.dictionary.version()),
                chunk: self.shared.settings.chunk,
            },
        ));
        let presence: Utf8Bytes = self
            .envelope(
                MessageType::Presence,
                PresencePayload {
                    event: PresenceEvent::Joined,
                    participant_id: pid,
                    participants,
                },
            )
            .to_json()
            .into();
        for l in state.links.values() {
            l.send(presence.clone());
        }
        Ok(())
    }

    /// Returns whether the room is now empty.
    fn depart(&self, participant_id: &str) -> bool {
        let mut state = self.state.lock();
        if state.links.remove(participant_id).is_none() {
            return state.links.is_empty();
        }
        state.order.retain(|p| p != participant_id);
        let empty = state.session.leave(participant_id);
        let flush = Job::new(
            SpeechJob::Flush {
                speaker_id: participant_id.to_owned(),
            },
            ids::new_id(),
            monotonic_ms(),
        );
        if self.queues.transcription.push(flush).is_rejected() {
            tracing::warn!(session = %self.id, participant = participant_id, "pending speech dropped on leave");
        }
        if !empty {
            let presence: Utf8Bytes = self
                .envelope(
                    MessageType::Presence,
                    PresencePayload {
                        event: PresenceEvent::Left,
                        participant_id: participant_id.to_owned(),
                        participants: Self::roster(&state),
                    },
                )
                .to_json()
                .into();
            for l in state.links.values() {
                l.send(presence.clone());
            }
        }
        empty
    }

    fn close(&self) {
        self.state.lock().session.close();
        self.queues.close();
    }

    pub fn participant(&self, participant_id: &str) -> Option<Participant> {
        self.state.lock().session.participant(participant_id).cloned()
    }

    pub fn participants(&self) -> Vec<Participant> {
        Self::roster(&self.state.lock())
    }

    pub fn settings(&self) -> SessionSettings {
        self.state.lock().session.settings.clone()
    }

    fn link(&self, participant_id: &str) -> Option<Arc<Link>> {
        self.state.lock().links.get(participant_id).cloned()
    }

    /// Members passing `filter`, with their current preferences.
    fn recipients(&self, filter: impl Fn(&SessionSettings, &Participant) -> bool) -> Vec<(Arc<Link>, ParticipantPrefs)> {
        let state = self.state.lock();
        state
            .order
            .iter()
            .filter_map(|pid| {
                let p = state.session.participant(pid)?;
                filter(&state.session.settings, p).then(|| (Arc::clone(&state.links[pid]), p.prefs.clone()))
            })
            .collect()
    }

    fn broadcast(&self, env: &Envelope, filter: impl Fn(&SessionSettings, &Participant) -> bool) {
        let frame: Utf8Bytes = env.to_json().into();
        for (link, _) in self.recipients(filter) {
            link.send(frame.clone());
        }
    }

    fn send_to(&self, participant_id: &str, env: &Envelope) {
        if let Some(link) = self.link(participant_id) {
            link.send_envelope(env);
        }
    }

    fn error_to(&self, participant_id: &str, code: &str, message: impl Into<String>, ref_event_id: Option<&str>) {
        self.send_to(
            participant_id,
            &self.envelope(MessageType::Error, ErrorPayload::new(code, message, ref_event_id)),
        );
    }

    fn admit_job<T>(&self, stage: Stage, queue: &StageQueue<Job<T>>, job: Job<T>) -> Offer {
        let outcome = queue.push(job);
        self.metrics().admission(stage, &outcome);
        match outcome {
            Admission::Rejected(_) => Offer::Rejected,
            _ => Offer::Accepted,
        }
    }

    /// Ingress for an audio chunk: ordering gate, then the transcription
    /// queue. The sequence number is consumed only if the chunk is queued,
    /// so a rejected chunk can be resent as is.
    pub fn offer_chunk(&self, chunk: AudioChunk, event_id: &str) -> Result<Offer, PipelineError> {
        let mut state = self.state.lock();
        state.session.peek_order(&chunk.speaker_id, chunk.seq)?;
        let (speaker, seq) = (chunk.speaker_id.clone(), chunk.seq);
        let job = Job::new(SpeechJob::Chunk(chunk), event_id.to_owned(), monotonic_ms());
        let offer = self.admit_job(Stage::Transcription, &self.queues.transcription, job);
        if offer == Offer::Accepted {
            state.session.check_order(&speaker, seq)?;
        }
        Ok(offer)
    }

    pub fn offer_text(&self, speaker_id: &str, text: String, event_id: &str) -> Offer {
        let job = Job::new(
            SpeechJob::Text {
                speaker_id: speaker_id.to_owned(),
                text,
            },
            event_id.to_owned(),
            monotonic_ms(),
        );
        self.admit_job(Stage::Transcription, &self.queues.transcription, job)
    }

    pub fn offer_summary_request(&self, requester: &str, event_id: &str) -> Offer {
        let job = Job::new(
            SummaryJob::OnDemand {
                requester: requester.to_owned(),
                ref_event_id: event_id.to_owned(),
            },
            event_id.to_owned(),
            monotonic_ms(),
        );
        self.admit_job(Stage::Summary, &self.queues.summary, job)
    }

    /// Live preference change; applies from the next delivery on.
    pub fn set_prefs(&self, participant_id: &str, prefs: ParticipantPrefs) -> Result<(), PipelineError> {
        prefs.validate()?;
        let mut state = self.state.lock();
        let p = state
            .session
            .participant_mut(participant_id)
            .ok_or_else(|| PipelineError::SessionClosed(self.id.clone()))?;
        p.prefs = prefs;
        let presence: Utf8Bytes = self
            .envelope(
                MessageType::Presence,
                PresencePayload {
                    event: PresenceEvent::Updated,
                    participant_id: participant_id.to_owned(),
                    participants: Self::roster(&state),
                },
            )
            .to_json()
            .into();
        for l in state.links.values() {
            l.send(presence.clone());
        }
        Ok(())
    }

    /// Replays a buffered sequence to the requester only.
    pub fn replay(&self, requester: &str, sequence_id: Option<&str>, speed: Option<f64>) -> Result<(), SignError> {
        let (sequence, speaker, link, prefs) = {
            let state = self.state.lock();
            let prefs = state
                .session
                .participant(requester)
                .map(|p| p.prefs.clone())
                .unwrap_or_default();
            let buffer = &state.session.replay_buffer;
            let id = match sequence_id {
                Some(id) => id.to_owned(),
                None => buffer
                    .last()
                    .map(|s| s.sequence_id.clone())
                    .ok_or_else(|| SignError::NotInBuffer("<latest>".into()))?,
            };
            let sequence = buffer.replay(&id, Some(speed.unwrap_or(prefs.signing_speed)))?;
            let speaker = state
                .sign_speakers
                .iter()
                .find(|(s, _)| *s == id)
                .map(|(_, p)| p.clone())
                .unwrap_or_default();
            (sequence, speaker, state.links.get(requester).cloned(), prefs)
        };
        if let Some(link) = link {
            link.send_envelope(&self.envelope(
                MessageType::SignSequence,
                SignSequencePayload::new(&sequence, &speaker, prefs.inline_frames, true),
            ));
        }
        Ok(())
    }

    fn record(&self, stage: Stage, event_id: &str, enqueue_ms: f64, dequeue_ms: f64) {
        let rec = StageLatency {
            stage,
            event_id: event_id.to_owned(),
            enqueue_ms,
            dequeue_ms,
            complete_ms: monotonic_ms(),
        };
        if let Err(e) = self.metrics().ledger.record(rec) {
            tracing::warn!(%e, "latency sample rejected");
        }
    }

    fn stage_error(&self, stage: Stage, speaker_id: &str, code: &str, message: String, ref_event_id: &str) {
        self.metrics().ledger.record_error(stage);
        tracing::debug!(session = %self.id, %stage, code, %message, "stage error");
        self.error_to(speaker_id, code, message, Some(ref_event_id));
    }

    /// A finalised utterance: caption to everyone, then fan-out.
    fn on_utterance(&self, utterance: Utterance, origin: &Job<impl Sized>) {
        self.broadcast(
            &self.envelope(
                MessageType::Transcript,
                TranscriptPayload {
                    speaker_id: utterance.speaker_id.clone(),
                    utterance_id: Some(utterance.utterance_id.clone()),
                    chunk_seq: None,
                    text: utterance.text.clone(),
                    is_final: true,
                    t0: utterance.t0,
                    t1: utterance.t1,
                    confidence: 1.0,
                    language: utterance.language.clone(),
                },
            ),
            |_, _| true,
        );
        let submissions = {
            let state = self.state.lock();
            match route_event(&state.session, PipelineEvent::Utterance(utterance.clone())) {
                Ok(s) => s,
                Err(_) => return,
            }
        };
        for submission in submissions {
            self.submit(submission, origin, &utterance.speaker_id);
        }
    }

    fn submit(&self, submission: Submission, origin: &Job<impl Sized>, speaker_id: &str) {
        let Some(stage) = submission.stage() else { return };
        let offer = match submission {
            Submission::Translate(u) => {
                let id = u.utterance_id.clone();
                self.admit_job(stage, &self.queues.translation, origin.follow(u, id))
            }
            Submission::Emotion(u) => {
                let id = u.utterance_id.clone();
                self.admit_job(stage, &self.queues.emotion, origin.follow(u, id))
            }
            Submission::Signgen {
                utterance_id,
                speaker_id: s,
                text,
            } => {
                let id = utterance_id.clone();
                let speaker_id = if s.is_empty() { speaker_id.to_owned() } else { s };
                self.admit_job(
                    stage,
                    &self.queues.signgen,
                    origin.follow(
                        SignJob {
                            utterance_id,
                            speaker_id,
                            text,
                        },
                        id,
                    ),
                )
            }
            Submission::Summary(u) => {
                let id = u.utterance_id.clone();
                self.admit_job(stage, &self.queues.summary, origin.follow(SummaryJob::Accumulate(u), id))
            }
            Submission::Display(_) | Submission::DisplayTranslation(_) => return,
        };
        if offer == Offer::Rejected {
            self.error_to(
                speaker_id,
                codes::QUEUE_FULL,
                format!("{stage} queue is full"),
                Some(&origin.event_id),
            );
        }
    }
}

async fn transcription_worker(room: Arc<Room>) {
    let services = Arc::clone(&room.shared.services);
    let params = room.shared.settings.chunk;
    let language = room.settings().source_language;
    let mut assemblers: HashMap<String, UtteranceAssembler> = HashMap::new();
    while let Some(job) = room.queues.transcription.pop().await {
        let dequeue_ms = monotonic_ms();
        match &job.item {
            SpeechJob::Chunk(chunk) => {
                let speaker = chunk.speaker_id.clone();
                match services.recognizer.recognize(chunk).await {
                    Ok(segment) => {
                        let asm = assemblers
                            .entry(speaker.clone())
                            .or_insert_with(|| UtteranceAssembler::new(params, speaker.as_str(), language.as_str()));
                        let finished = asm.push(&segment);
                        room.send_to(
                            &speaker,
                            &room.envelope(
                                MessageType::Transcript,
                                TranscriptPayload {
                                    speaker_id: speaker.clone(),
                                    utterance_id: None,
                                    chunk_seq: Some(segment.chunk_seq),
                                    text: segment.text.clone(),
                                    is_final: false,
                                    t0: segment.t0,
                                    t1: segment.t1,
                                    confidence: segment.confidence,
                                    language: language.clone(),
                                },
                            ),
                        );
                        room.record(Stage::Transcription, &job.event_id, job.enqueue_ms, dequeue_ms);
                        for u in finished {
                            room.on_utterance(u, &job);
                        }
                    }
                    Err(e) => room.stage_error(Stage::Transcription, &speaker, e.code(), e.to_string(), &job.event_id),
                }
            }
            SpeechJob::Text { speaker_id, text } => {
                let asm = assemblers
                    .entry(speaker_id.clone())
                    .or_insert_with(|| UtteranceAssembler::new(params, speaker_id.as_str(), language.as_str()));
                let mut out: Vec<Utterance> = asm.flush().into_iter().collect();
                out.extend(asm.from_text(text, room.clock_s()));
                for u in out {
                    room.on_utterance(u, &job);
                }
            }
            SpeechJob::Flush { speaker_id } => {
                if let Some(u) = assemblers.remove(speaker_id).and_then(|mut a| a.flush()) {
                    room.on_utterance(u, &job);
                }
            }
        }
    }
}

/// Every registered target a member prefers, plus the session target.
fn translation_targets(room: &Room, source: &str) -> (Vec<String>, String) {
    let state = room.state.lock();
    let settings = &state.session.settings;
    let mut targets: Vec<String> = state
        .session
        .participants()
        .iter()
        .map(|p| p.prefs.language.clone())
        .filter(|l| l != source && room.shared.services.translator.is_registered(source, l))
        .collect();
    if settings.translates() {
        targets.push(settings.target_language.clone());
    }
    targets.sort();
    targets.dedup();
    (targets, settings.target_language.clone())
}

async fn translation_worker(room: Arc<Room>) {
    let services = Arc::clone(&room.shared.services);
    while let Some(job) = room.queues.translation.pop().await {
        let dequeue_ms = monotonic_ms();
        let u = &job.item;
        let (targets, session_target) = translation_targets(&room, &u.language);
        let mut failed = false;
        for target in targets {
            match services.translator.translate(u, &target).await {
                Ok(t) => {
                    let env = room.envelope(
                        MessageType::Translation,
                        TranslationPayload {
                            utterance_id: t.utterance_id.clone(),
                            speaker_id: u.speaker_id.clone(),
                            source_language: t.pair.source.clone(),
                            target_language: t.pair.target.clone(),
                            source_text: t.source_text.clone(),
                            text: t.target_text.clone(),
                        },
                    );
                    room.broadcast(&env, |_, p| p.prefs.language == target);
                    if target == session_target {
                        let submissions = {
                            let state = room.state.lock();
                            route_event(&state.session, PipelineEvent::Translation(t)).unwrap_or_default()
                        };
                        for s in submissions {
                            room.submit(s, &job, &u.speaker_id);
                        }
                    }
                }
                Err(e) => {
                    failed = true;
                    room.stage_error(Stage::Translation, &u.speaker_id, e.code(), e.to_string(), &job.event_id);
                }
            }
        }
        if !failed {
            room.record(Stage::Translation, &job.event_id, job.enqueue_ms, dequeue_ms);
        }
    }
}

async fn emotion_worker(room: Arc<Room>) {
    let services = Arc::clone(&room.shared.services);
    while let Some(job) = room.queues.emotion.pop().await {
        let dequeue_ms = monotonic_ms();
        let u = &job.item;
        match services.emotion.classify(&u.utterance_id, &u.text).await {
            Ok(label) => {
                room.record(Stage::Emotion, &job.event_id, job.enqueue_ms, dequeue_ms);
                let env = room.envelope(MessageType::Emotion, EmotionPayload::new(&label, &u.speaker_id));
                room.broadcast(&env, |s, p| s.emoji_overlay && p.prefs.emoji_enabled);
            }
            Err(e) => {
                // emotion tags are optional; the speaker is not told
                room.metrics().ledger.record_error(Stage::Emotion);
                tracing::debug!(session = %room.id, code = e.code(), "emotion tag skipped");
            }
        }
    }
}

async fn signgen_worker(room: Arc<Room>) {
    let dict = Arc::clone(&room.shared.services.dictionary);
    let transition_frames = room.shared.settings.transition_frames;
    while let Some(job) = room.queues.signgen.pop().await {
        let dequeue_ms = monotonic_ms();
        let SignJob {
            utterance_id,
            speaker_id,
            text,
        } = &job.item;
        let glosses = tokenize_to_glosses(text, &dict);
        let sequence = match assemble_animation(&glosses, &dict, 1.0, transition_frames, utterance_id) {
            Ok(s) => s,
            Err(e) => {
                room.stage_error(Stage::Signgen, speaker_id, e.code(), e.to_string(), &job.event_id);
                continue;
            }
        };
        {
            let mut state = room.state.lock();
            let capacity = state.session.replay_buffer.capacity();
            state.session.replay_buffer.push(sequence.clone());
            state
                .sign_speakers
                .push_back((sequence.sequence_id.clone(), speaker_id.clone()));
            while state.sign_speakers.len() > capacity {
                state.sign_speakers.pop_front();
            }
        }
        let recipients = room.recipients(|s, p| s.signing_enabled && p.prefs.signing_enabled);
        // one serialisation per distinct (speed, inline) pair
        let mut frames: BTreeMap<(u64, bool), Utf8Bytes> = BTreeMap::new();
        for (link, prefs) in recipients {
            let key = (prefs.signing_speed.to_bits(), prefs.inline_frames);
            let frame = match frames.get(&key) {
                Some(f) => f.clone(),
                None => {
                    let Ok(respeeded) = sequence.respeed(prefs.signing_speed) else {
                        continue;
                    };
                    let env = room.envelope(
                        MessageType::SignSequence,
                        SignSequencePayload::new(&respeeded, speaker_id, prefs.inline_frames, false),
                    );
                    let f: Utf8Bytes = env.to_json().into();
                    frames.insert(key, f.clone());
                    f
                }
            };
            link.send(frame);
        }
        room.record(Stage::Signgen, &job.event_id, job.enqueue_ms, dequeue_ms);
        room.metrics().ledger.record_end_to_end(monotonic_ms() - job.origin_ms);
    }
}

/// Sends `record` to each recipient in their language when a pair is
/// registered, otherwise in the source language.
async fn deliver_summary(
    room: &Room,
    record: SummaryRecord,
    trigger: SummaryTrigger,
    recipients: Vec<(Arc<Link>, ParticipantPrefs)>,
) {
    let mut languages: Vec<String> = recipients
        .iter()
        .map(|(_, p)| p.language.clone())
        .filter(|l| *l != record.language && room.shared.services.translator.is_registered(&record.language, l))
        .collect();
    languages.sort();
    languages.dedup();
    let mut by_language: HashMap<String, Utf8Bytes> = HashMap::new();
    for t in summarize_multilingual(&record, &languages, &room.shared.services.translator).await {
        if let Ok(r) = t.result {
            by_language.insert(
                t.target,
                room.envelope(MessageType::Summary, SummaryPayload::new(r, trigger))
                    .to_json()
                    .into(),
            );
        }
    }
    let source: Utf8Bytes = room
        .envelope(MessageType::Summary, SummaryPayload::new(record, trigger))
        .to_json()
        .into();
    for (link, prefs) in recipients {
        link.send(by_language.get(&prefs.language).unwrap_or(&source).clone());
    }
}

async fn summary_worker(room: Arc<Room>) {
    let config = room.shared.services.summary.clone();
    let (interval_s, language) = {
        let s = room.settings();
        (s.summary_interval_s, s.source_language)
    };
    let mut transcript = SessionTranscript::new(room.id.as_str(), language.as_str());
    let mut tick = tokio::time::interval(room.shared.settings.summary_tick);
    tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let summarize = |w: &Window| extract_summary(&room.id, w, &language, &config);
    loop {
        tokio::select! {
            job = room.queues.summary.pop() => {
                let Some(job) = job else { break };
                let dequeue_ms = monotonic_ms();
                match &job.item {
                    SummaryJob::Accumulate(u) => {
                        transcript.accumulate(u, room.clock_s());
                        room.record(Stage::Summary, &job.event_id, job.enqueue_ms, dequeue_ms);
                    }
                    SummaryJob::OnDemand { requester, ref_event_id } => {
                        let result = transcript.on_demand(room.clock_s()).and_then(|w| summarize(&w));
                        match result {
                            Ok(record) => {
                                let recipients: Vec<_> = room.recipients(|_, p| p.participant_id == *requester);
                                deliver_summary(&room, record, SummaryTrigger::OnDemand, recipients).await;
                                room.record(Stage::Summary, &job.event_id, job.enqueue_ms, dequeue_ms);
                            }
                            Err(e) => room.error_to(requester, e.code(), e.to_string(), Some(ref_event_id)),
                        }
                    }
                }
            }
            _ = tick.tick() => {
                if let Some(window) = transcript.schedule_tick(room.clock_s(), interval_s) {
                    match summarize(&window) {
                        Ok(record) => {
                            let recipients = room.recipients(|_, _| true);
                            deliver_summary(&room, record, SummaryTrigger::Scheduled, recipients).await;
                        }
                        Err(e) => tracing::warn!(session = %room.id, %e, "scheduled summary failed"),
                    }
                }
            }
        }
    }
}
