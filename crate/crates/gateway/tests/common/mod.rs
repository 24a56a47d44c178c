#![allow(dead_code)]

use std::time::Duration;

use axs_core::chunker::script::{plan_speech, PlannedChunk, ScriptTiming, SpeechPlan};
use axs_core::chunker::ChunkParams;
use axs_core::recognizer::encode_pcm;
use axs_gateway::config::GatewayConfig;
use axs_gateway::server::Gateway;
use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

pub const SAMPLE_RATE: u32 = 8000;
pub const WAIT: Duration = Duration::from_secs(5);

pub fn config() -> GatewayConfig {
    let mut c = GatewayConfig::layered("", std::iter::empty()).unwrap();
    c.port = 0;
    c.demo_words = 60;
    c.summary_tick_ms = 100;
    c
}

pub async fn start(config: &GatewayConfig) -> Gateway {
    Gateway::start(config).await.expect("gateway starts")
}

pub struct Client {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    pub id: String,
    pub session: String,
    counter: u64,
    /// Frames read while waiting for something else.
    backlog: Vec<Value>,
}

pub enum Next {
    Frame(Value),
    Closed(Option<(u16, String)>),
    Timeout,
}

impl Client {
    pub async fn connect(gw: &Gateway) -> Self {
        let (ws, _) = tokio_tungstenite::connect_async(gw.ws_url()).await.expect("ws connect");
        Self {
            ws,
            id: String::new(),
            session: String::new(),
            counter: 0,
            backlog: Vec::new(),
        }
    }

    /// Connects and joins; panics unless `joined` comes back.
    pub async fn join(gw: &Gateway, session: &str, sender: &str, role: &str, prefs: Value) -> Self {
        let mut c = Self::connect(gw).await;
        let joined = c.try_join(session, sender, role, prefs, None).await.expect("joined");
        c.id = joined["participant_id"].as_str().unwrap().to_owned();
        c.session = joined["session_id"].as_str().unwrap().to_owned();
        c
    }

    /// Returns the `joined` payload, or the error payload.
    pub async fn try_join(
        &mut self,
        session: &str,
        sender: &str,
        role: &str,
        prefs: Value,
        settings: Option<Value>,
    ) -> Result<Value, Value> {
        let mut payload = json!({ "display_name": sender, "role": role, "prefs": prefs });
        if let Some(s) = settings {
            payload["settings"] = s;
        }
        self.send_as(session, sender, "join", payload).await;
        let env = self.expect_any(&["joined", "error"], WAIT).await;
        if env["type"] != "joined" {
            return Err(env["payload"].clone());
        }
        self.id = env["payload"]["participant_id"].as_str().unwrap().to_owned();
        self.session = env["payload"]["session_id"].as_str().unwrap().to_owned();
        Ok(env["payload"].clone())
    }

    pub async fn send_raw(&mut self, text: impl Into<String>) {
        self.ws.send(Message::Text(text.into().into())).await.expect("ws send");
    }

    async fn send_as(&mut self, session: &str, sender: &str, kind: &str, payload: Value) -> String {
        self.counter += 1;
        let event_id = format!("{sender}-{}", self.counter);
        let env = json!({
            "type": kind,
            "session_id": session,
            "sender_id": sender,
            "event_id": event_id,
            "ts_ms": 0.0,
            "payload": payload,
        });
        self.send_raw(env.to_string()).await;
        event_id
    }

    /// Sends an envelope from this participant; returns its event id.
    pub async fn send(&mut self, kind: &str, payload: Value) -> String {
        let (s, id) = (self.session.clone(), self.id.clone());
        self.send_as(&s, &id, kind, payload).await
    }

    pub async fn next(&mut self, timeout: Duration) -> Next {
        if !self.backlog.is_empty() {
            return Next::Frame(self.backlog.remove(0));
        }
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            match tokio::time::timeout_at(deadline, self.ws.next()).await {
                Err(_) => return Next::Timeout,
                Ok(None) | Ok(Some(Err(_))) => return Next::Closed(None),
                Ok(Some(Ok(Message::Text(t)))) => return Next::Frame(serde_json::from_str(&t).expect("server sends JSON")),
                Ok(Some(Ok(Message::Close(f)))) => return Next::Closed(f.map(|f| (u16::from(f.code), f.reason.to_string()))),
                Ok(Some(Ok(_))) => continue,
            }
        }
    }

    /// Next envelope whose type is one of `kinds`; others are kept for later.
    pub async fn expect_any(&mut self, kinds: &[&str], timeout: Duration) -> Value {
        self.expect_where(|e| kinds.iter().any(|k| e["type"] == *k), &format!("{kinds:?}"), timeout)
            .await
    }

    /// Next envelope satisfying `pred`; others are kept, in order, for later.
    pub async fn expect_where(&mut self, pred: impl Fn(&Value) -> bool, what: &str, timeout: Duration) -> Value {
        if let Some(i) = self.backlog.iter().position(&pred) {
            return self.backlog.remove(i);
        }
        let deadline = tokio::time::Instant::now() + timeout;
        let mut skipped = Vec::new();
        let found = loop {
            let left = deadline.saturating_duration_since(tokio::time::Instant::now());
            match self.next_fresh(left).await {
                Next::Frame(env) if pred(&env) => break env,
                Next::Frame(env) => skipped.push(env),
                Next::Closed(f) => panic!("{}: closed {f:?} while waiting for {what}; got {skipped:?}", self.id),
                Next::Timeout => panic!("{}: timed out waiting for {what}; got {skipped:?}", self.id),
            }
        };
        self.backlog.extend(skipped);
        found
    }

    async fn next_fresh(&mut self, timeout: Duration) -> Next {
        let backlog = std::mem::take(&mut self.backlog);
        let n = self.next(timeout).await;
        self.backlog = backlog;
        n
    }

    pub async fn expect(&mut self, kind: &str) -> Value {
        self.expect_any(&[kind], WAIT).await
    }

    pub async fn expect_error(&mut self, code: &str) -> Value {
        let env = self.expect("error").await;
        assert_eq!(env["payload"]["code"], code, "{env}");
        env
    }

    /// Everything that arrives within `window`, backlog first.
    pub async fn drain(&mut self, window: Duration) -> Vec<Value> {
        let mut out = std::mem::take(&mut self.backlog);
        let deadline = tokio::time::Instant::now() + window;
        loop {
            let left = deadline.saturating_duration_since(tokio::time::Instant::now());
            match self.next(left).await {
                Next::Frame(env) => out.push(env),
                _ => return out,
            }
        }
    }

    /// Reads until the server closes; returns the close code and reason
    /// plus the frames seen on the way.
    pub async fn until_closed(&mut self, timeout: Duration) -> (Option<(u16, String)>, Vec<Value>) {
        let mut seen = std::mem::take(&mut self.backlog);
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(tokio::time::Instant::now());
            match self.next(left).await {
                Next::Frame(env) => seen.push(env),
                Next::Closed(f) => return (f, seen),
                Next::Timeout => panic!("{}: not closed within {timeout:?}; got {seen:?}", self.id),
            }
        }
    }

    /// Sends a scripted chunk with silent PCM of the right length.
    pub async fn send_chunk(&mut self, c: &PlannedChunk) -> String {
        self.send("audio_chunk", chunk_payload(c)).await
    }

    /// Speaks a whole plan, waiting for each chunk's partial transcript.
    pub async fn speak(&mut self, plan: &SpeechPlan) {
        for c in &plan.chunks {
            self.send_chunk(c).await;
            let partial = self
                .expect_where(
                    |e| e["type"] == "transcript" && e["payload"]["final"] == false,
                    "partial",
                    WAIT,
                )
                .await;
            assert_eq!(partial["payload"]["chunk_seq"], c.seq);
        }
    }

    pub async fn close(mut self) {
        let _ = self.ws.close(None).await;
    }
}

pub fn chunk_payload(c: &PlannedChunk) -> Value {
    let samples = vec![0i16; (c.duration * SAMPLE_RATE as f64).round() as usize];
    let mut p = json!({
        "seq": c.seq,
        "start_time": c.start_time,
        "duration": c.duration,
        "content_duration": c.content_duration,
        "sample_rate": SAMPLE_RATE,
        "audio_b64": encode_pcm(&samples),
    });
    if let Some(t) = &c.oracle_text {
        p["oracle_text"] = json!(t);
    }
    p
}

pub fn plan(lines: &[&str]) -> SpeechPlan {
    let lines: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
    plan_speech(&lines, ScriptTiming::default(), ChunkParams::default())
}

pub fn of_type<'a>(frames: &'a [Value], kind: &str) -> Vec<&'a Value> {
    frames.iter().filter(|e| e["type"] == kind).collect()
}

pub async fn get_json(gw: &Gateway, path: &str) -> Value {
    reqwest::get(gw.http_url(path))
        .await
        .unwrap()
        .error_for_status()
        .unwrap()
        .json()
        .await
        .unwrap()
}

pub fn viewer_prefs(language: &str, emoji: bool, speed: f64) -> Value {
    json!({ "language": language, "emoji_enabled": emoji, "signing_speed": speed })
}
