//! One simulated speaker.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axs_core::chunker::script::PlannedChunk;
use axs_core::chunker::ChunkParams;
use axs_core::recognizer::encode_pcm;
use futures_util::stream::{SplitSink, SplitStream};
use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::protocol::frame::coding::CloseCode;
use tokio_tungstenite::tungstenite::protocol::CloseFrame;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

use crate::profile::{LoadProfile, Pacing};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

const CONNECT_TIMEOUT: Duration = Duration::from_secs(10);
const JOIN_TIMEOUT: Duration = Duration::from_secs(10);
const CLOSE_TIMEOUT: Duration = Duration::from_secs(2);

/// Chunks sent but not yet acknowledged, across all clients of a run.
#[derive(Debug, Default)]
pub struct InFlight {
    current: AtomicI64,
    peak: AtomicI64,
}

impl InFlight {
    fn up(&self) {
        let now = self.current.fetch_add(1, Ordering::Relaxed) + 1;
        self.peak.fetch_max(now, Ordering::Relaxed);
    }

    fn down(&self) {
        self.current.fetch_sub(1, Ordering::Relaxed);
    }

    pub fn peak(&self) -> u64 {
        self.peak.load(Ordering::Relaxed).max(0) as u64
    }
}

/// End-to-end latency of one utterance.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Sample {
    pub client: usize,
    pub utterance: usize,
    /// Send time of the utterance's completing chunk, ms since run start.
    pub sent_ms: f64,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ClientLog {
    pub client: usize,
    pub connected: bool,
    pub joined: bool,
    /// Every expected reply arrived before the drain timeout.
    pub completed: bool,
    /// Script envelopes sent; the join is not counted.
    pub sent: u64,
    pub received: u64,
    pub errors: BTreeMap<String, u64>,
    pub mismatches: u64,
    pub finals: usize,
    pub signs: usize,
    /// Close code when the gateway hung up on us.
    pub kicked: Option<u16>,
    pub samples: Vec<Sample>,
}

impl ClientLog {
    pub fn error_count(&self) -> u64 {
        self.errors.values().sum()
    }

    fn error(&mut self, code: &str) {
        *self.errors.entry(code.to_owned()).or_default() += 1;
    }
}

/// Per-run facts every client needs.
#[derive(Debug, Clone)]
pub struct ClientSpec {
    pub ws_url: String,
    pub session_id: String,
    pub index: usize,
    pub epoch: Instant,
    pub in_flight: Arc<InFlight>,
}

pub async fn simulate_client(spec: ClientSpec, profile: Arc<LoadProfile>) -> ClientLog {
    let mut log = ClientLog {
        client: spec.index,
        ..ClientLog::default()
    };
    let ws = match tokio::time::timeout(CONNECT_TIMEOUT, tokio_tungstenite::connect_async(spec.ws_url.as_str())).await {
        Ok(Ok((ws, _))) => ws,
        Ok(Err(e)) => {
            tracing::debug!(client = spec.index, error = %e, "connect failed");
            log.error("CONNECT_FAILED");
            return log;
        }
        Err(_) => {
            log.error("CONNECT_FAILED");
            return log;
        }
    };
    log.connected = true;
    let (sink, stream) = ws.split();
    let mut c = Speaker {
        sink,
        stream,
        id: format!("c{}", spec.index),
        counter: 0,
        spec,
        log,
    };
    let Some(params) = c.join(&profile).await else {
        c.close().await;
        return c.log;
    };
    c.log.joined = true;
    c.stream_script(&profile, params).await;
    c.close().await;
    c.log
}

struct Speaker {
    sink: SplitSink<Ws, Message>,
    stream: SplitStream<Ws>,
    id: String,
    counter: u64,
    spec: ClientSpec,
    log: ClientLog,
}

/// What a client still waits for.
struct Progress {
    next: usize,
    /// Event id and seq of the chunk a max-rate client waits on.
    awaiting: Option<(String, u64)>,
    unacked: HashSet<u64>,
    /// Utterance index by utterance id, from our own finals.
    utterances: HashMap<String, usize>,
    completed_at: Vec<Option<f64>>,
}

impl Speaker {
    fn now_ms(&self) -> f64 {
        self.spec.epoch.elapsed().as_secs_f64() * 1000.0
    }

    fn envelope(&mut self, kind: &str, payload: Value) -> (String, String) {
        self.counter += 1;
        let event_id = format!("{}-{}", self.id, self.counter);
        let text = json!({
            "type": kind,
            "session_id": self.spec.session_id,
            "sender_id": self.id,
            "event_id": event_id,
            "ts_ms": self.now_ms(),
            "payload": payload,
        })
        .to_string();
        (event_id, text)
    }

    async fn send(&mut self, text: String) -> bool {
        self.sink.send(Message::Text(text.into())).await.is_ok()
    }

    async fn join(&mut self, profile: &LoadProfile) -> Option<ChunkParams> {
        let payload = json!({
            "display_name": self.id,
            "role": "speaker",
            "prefs": { "emoji_enabled": profile.emoji },
        });
        let (_, text) = self.envelope("join", payload);
        if !self.send(text).await {
            self.log.error("CONNECT_FAILED");
            return None;
        }
        let deadline = tokio::time::Instant::now() + JOIN_TIMEOUT;
        loop {
            let env = match tokio::time::timeout_at(deadline, self.stream.next()).await {
                Err(_) => {
                    self.log.error("JOIN_TIMEOUT");
                    return None;
                }
                Ok(Some(Ok(Message::Text(t)))) => parse(&t)?,
                Ok(Some(Ok(Message::Close(f)))) => {
                    self.log.kicked = Some(f.map_or(1005, |f| u16::from(f.code)));
                    return None;
                }
                Ok(Some(Ok(_))) => continue,
                Ok(None) | Ok(Some(Err(_))) => {
                    self.log.kicked = Some(1006);
                    return None;
                }
            };
            self.log.received += 1;
            match env["type"].as_str() {
                Some("joined") => {
                    self.id = env["payload"]["participant_id"].as_str().unwrap_or(&self.id).to_owned();
                    return serde_json::from_value(env["payload"]["chunk"].clone())
                        .ok()
                        .or(Some(ChunkParams::default()));
                }
                Some("error") => {
                    self.log.error(env["payload"]["code"].as_str().unwrap_or("UNKNOWN"));
                    return None;
                }
                _ => {}
            }
        }
    }

    async fn stream_script(&mut self, profile: &LoadProfile, params: ChunkParams) {
        let plan = profile.plan(params);
        let mut pcm: HashMap<usize, String> = HashMap::new();
        let mut p = Progress {
            next: 0,
            awaiting: None,
            unacked: HashSet::new(),
            utterances: HashMap::new(),
            completed_at: vec![None; plan.expected.len()],
        };
        let stride = Duration::from_secs_f64(params.stride_s());
        let mut ticker = tokio::time::interval(stride);
        ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        let drain = tokio::time::sleep(Duration::from_secs(86_400));
        tokio::pin!(drain);
        let mut draining = false;

        loop {
            let all_sent = p.next == plan.chunks.len();
            if all_sent && !draining {
                draining = true;
                drain.as_mut().reset(tokio::time::Instant::now() + profile.drain_timeout);
            }
            if all_sent && p.unacked.is_empty() && self.log.finals >= plan.settled && self.log.signs >= plan.settled {
                self.log.completed = true;
                break;
            }
            let may_send = !all_sent && (profile.pacing == Pacing::Realtime || p.awaiting.is_none());
            tokio::select! {
                _ = ticker.tick(), if may_send && profile.pacing == Pacing::Realtime => {
                    if !self.send_chunk(&plan.chunks[p.next], profile, &mut pcm, &mut p).await {
                        break;
                    }
                }
                _ = std::future::ready(()), if may_send && profile.pacing == Pacing::Max => {
                    if !self.send_chunk(&plan.chunks[p.next], profile, &mut pcm, &mut p).await {
                        break;
                    }
                }
                _ = &mut drain, if draining => break,
                msg = self.stream.next() => match msg {
                    Some(Ok(Message::Text(t))) => {
                        self.log.received += 1;
                        if let Some(env) = parse(&t) {
                            self.on_envelope(&env, &plan.expected, &mut p);
                        }
                    }
                    Some(Ok(Message::Close(f))) => {
                        self.log.kicked = Some(f.map_or(1005, |f| u16::from(f.code)));
                        break;
                    }
                    Some(Ok(_)) => {}
                    Some(Err(_)) | None => {
                        self.log.kicked = Some(1006);
                        break;
                    }
                }
            }
        }
        // whatever is still unacknowledged no longer counts as in flight
        for _ in p.unacked.drain() {
            self.spec.in_flight.down();
        }
    }

    async fn send_chunk(
        &mut self,
        chunk: &PlannedChunk,
        profile: &LoadProfile,
        pcm: &mut HashMap<usize, String>,
        p: &mut Progress,
    ) -> bool {
        let samples = (chunk.duration * profile.sample_rate as f64).round() as usize;
        let audio = pcm.entry(samples).or_insert_with(|| encode_pcm(&vec![0i16; samples]));
        let mut payload = json!({
            "seq": chunk.seq,
            "start_time": chunk.start_time,
            "duration": chunk.duration,
            "content_duration": chunk.content_duration,
            "sample_rate": profile.sample_rate,
            "audio_b64": audio,
        });
        if let Some(t) = &chunk.oracle_text {
            payload["oracle_text"] = json!(t);
        }
        let injected = profile.inject_reorder && chunk.seq == 1;
        let stale = injected.then(|| payload.clone());
        let (event_id, text) = self.envelope("audio_chunk", payload);
        if !self.send(text).await {
            self.log.kicked.get_or_insert(1006);
            return false;
        }
        self.log.sent += 1;
        self.spec.in_flight.up();
        p.unacked.insert(chunk.seq);
        if let Some(u) = chunk.completes_speech_of {
            if let Some(slot) = p.completed_at.get_mut(u) {
                *slot = Some(self.now_ms());
            }
        }
        p.awaiting = Some((event_id, chunk.seq));
        p.next += 1;
        if let Some(mut stale) = stale {
            // a repeated seq; the gateway must refuse it without touching the stream
            stale["seq"] = json!(0);
            let (_, text) = self.envelope("audio_chunk", stale);
            if !self.send(text).await {
                return false;
            }
            self.log.sent += 1;
        }
        true
    }

    fn on_envelope(&mut self, env: &Value, expected: &[String], p: &mut Progress) {
        let payload = &env["payload"];
        match env["type"].as_str() {
            Some("transcript") if payload["speaker_id"] == self.id.as_str() => {
                if payload["final"] == true {
                    let k = self.log.finals;
                    self.log.finals += 1;
                    let text = payload["text"].as_str().unwrap_or_default();
                    if expected.get(k).map(String::as_str) != Some(text) {
                        tracing::debug!(client = self.spec.index, utterance = k, got = text, "transcript mismatch");
                        self.log.mismatches += 1;
                    }
                    if let Some(id) = payload["utterance_id"].as_str() {
                        p.utterances.insert(id.to_owned(), k);
                    }
                } else if let Some(seq) = payload["chunk_seq"].as_u64() {
                    self.ack(seq, p);
                }
            }
            Some("sign_sequence") if payload["speaker_id"] == self.id.as_str() && payload["replay"] != true => {
                self.log.signs += 1;
                let utterance = payload["utterance_id"].as_str().and_then(|id| p.utterances.get(id)).copied();
                if let Some(k) = utterance {
                    if let Some(sent_ms) = p.completed_at.get(k).copied().flatten() {
                        let now = self.now_ms();
                        self.log.samples.push(Sample {
                            client: self.spec.index,
                            utterance: k,
                            sent_ms,
                            latency_ms: now - sent_ms,
                        });
                    }
                }
            }
            Some("error") => {
                let code = payload["code"].as_str().unwrap_or("UNKNOWN").to_owned();
                self.log.error(&code);
                let refers = payload["ref_event_id"].as_str();
                if let Some((event_id, seq)) = p.awaiting.clone() {
                    if refers == Some(event_id.as_str()) {
                        self.ack(seq, p);
                    }
                }
            }
            _ => {}
        }
    }

    fn ack(&mut self, seq: u64, p: &mut Progress) {
        if p.unacked.remove(&seq) {
            self.spec.in_flight.down();
        }
        if p.awaiting.as_ref().is_some_and(|(_, s)| *s == seq) {
            p.awaiting = None;
        }
    }

    /// Polite close: our close frame, then wait briefly for the echo.
    async fn close(&mut self) {
        if self.log.kicked.is_some() {
            return;
        }
        let frame = CloseFrame {
            code: CloseCode::Normal,
            reason: "done".into(),
        };
        if self.sink.send(Message::Close(Some(frame))).await.is_err() {
            return;
        }
        let _ = tokio::time::timeout(CLOSE_TIMEOUT, async {
            while let Some(Ok(msg)) = self.stream.next().await {
                if matches!(msg, Message::Close(_)) {
                    break;
                }
            }
        })
        .await;
    }
}

fn parse(text: &str) -> Option<Value> {
    serde_json::from_str(text).ok()
}
