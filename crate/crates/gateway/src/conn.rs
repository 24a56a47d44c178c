//! One WebSocket connection: a reader that decodes and dispatches client
//! messages, and a writer that drains the connection's outbound queue.

use std::sync::Arc;
use std::time::Duration;

use axs_core::backpressure::{RejectionTracker, Verdict};
use axs_core::pipeline::Role;
use axum::extract::ws::{CloseFrame, Message, Utf8Bytes, WebSocket};
use futures_util::stream::{SplitSink, SplitStream};
use futures_util::{SinkExt, StreamExt};
use tokio::sync::{mpsc, watch};

use crate::hub::{CloseReason, Hub, Link, Membership, Offer, CLOSE_JOIN_TIMEOUT, CLOSE_SLOW_CONSUMER};
use crate::protocol::{codes, parse_inbound, Envelope, Inbound};

#[derive(Debug, Clone)]
pub struct ConnSettings {
    pub join_timeout: Duration,
    pub outbound_buffer: usize,
    pub grace: u32,
    pub max_frame_bytes: usize,
}

pub const CLOSE_TOO_BIG: u16 = 1009;

/// How long a kicked connection gets to flush its notice and close frame.
const CLOSE_FLUSH: Duration = Duration::from_secs(2);

pub async fn handle_socket(socket: WebSocket, hub: Arc<Hub>, settings: ConnSettings) {
    let metrics = Arc::clone(hub.metrics());
    metrics.connection_opened();
    let (link, rx, close_rx) = Link::new(settings.outbound_buffer, settings.grace, Arc::clone(&metrics));
    let (sink, mut stream) = socket.split();
    let mut writer = tokio::spawn(write_loop(sink, rx, close_rx.clone()));

    let mut conn = Conn {
        hub: Arc::clone(&hub),
        link: Arc::clone(&link),
        member: None,
        ingress: RejectionTracker::new(settings.grace),
    };
    conn.read_loop(&mut stream, close_rx, &settings).await;

    if let Some(member) = conn.member.take() {
        hub.leave(&member.membership);
    }
    if link.is_closing() {
        // keep reading until the peer answers the close, so unread input
        // does not turn the close into a reset
        let drain = async {
            while let Some(Ok(msg)) = stream.next().await {
                if matches!(msg, Message::Close(_)) {
                    break;
                }
            }
        };
        let flush = async {
            let _ = (&mut writer).await;
        };
        if tokio::time::timeout(CLOSE_FLUSH, futures_util::future::join(drain, flush))
            .await
            .is_err()
        {
            writer.abort();
        }
    } else {
        writer.abort();
    }
    metrics.connection_closed();
}

async fn write_loop(
    mut sink: SplitSink<WebSocket, Message>,
    mut rx: mpsc::Receiver<Utf8Bytes>,
    mut close_rx: watch::Receiver<Option<CloseReason>>,
) {
    loop {
        tokio::select! {
            biased;
            changed = close_rx.changed() => {
                if changed.is_err() {
                    return;
                }
                let Some(reason) = close_rx.borrow_and_update().clone() else { continue };
                if reason.flush {
                    while let Ok(frame) = rx.try_recv() {
                        if sink.send(Message::Text(frame)).await.is_err() {
                            return;
                        }
                    }
                }
                if let Some(notice) = reason.notice {
                    let _ = sink.send(Message::Text(notice)).await;
                }
                let frame = CloseFrame { code: reason.code, reason: reason.reason.into() };
                let _ = sink.send(Message::Close(Some(frame))).await;
                let _ = sink.close().await;
                return;
            }
            frame = rx.recv() => match frame {
                Some(frame) => {
                    if sink.send(Message::Text(frame)).await.is_err() {
                        return;
                    }
                }
                None => return,
            }
        }
    }
}

struct Member {
    membership: Membership,
    role: Role,
}

struct Conn {
    hub: Arc<Hub>,
    link: Arc<Link>,
    member: Option<Member>,
    /// Consecutive ingress rejections from this producer.
    ingress: RejectionTracker,
}

impl Conn {
    async fn read_loop(
        &mut self,
        stream: &mut SplitStream<WebSocket>,
        mut close_rx: watch::Receiver<Option<CloseReason>>,
        settings: &ConnSettings,
    ) {
        let join_timeout = settings.join_timeout;
        let deadline = tokio::time::sleep(join_timeout);
        tokio::pin!(deadline);
        loop {
            tokio::select! {
                biased;
                _ = close_rx.changed() => return,
                _ = &mut deadline, if self.member.is_none() => {
                    self.link.close(CloseReason::with_error(
                        CLOSE_JOIN_TIMEOUT,
                        codes::JOIN_TIMEOUT,
                        "",
                        &format!("no join within {} ms", join_timeout.as_millis()),
                    ));
                }
                msg = stream.next() => match msg {
                    Some(Ok(Message::Text(t))) if t.len() > settings.max_frame_bytes => self.too_big(t.len(), settings),
                    Some(Ok(Message::Binary(b))) if b.len() > settings.max_frame_bytes => self.too_big(b.len(), settings),
                    Some(Ok(Message::Text(text))) => self.on_text(&text),
                    Some(Ok(Message::Binary(_))) => {
                        self.hub.metrics().envelope_in();
                        self.link.send_error(self.session_id(), codes::MALFORMED_PAYLOAD, "binary frames are not supported", None);
                    }
                    Some(Ok(Message::Close(_))) | Some(Err(_)) | None => return,
                    Some(Ok(_)) => {}
                }
            }
        }
    }

    fn too_big(&self, len: usize, settings: &ConnSettings) {
        self.link.close(CloseReason::with_error(
            CLOSE_TOO_BIG,
            codes::MALFORMED_PAYLOAD,
            self.session_id(),
            &format!("frame of {len} bytes exceeds {}", settings.max_frame_bytes),
        ));
    }

    fn session_id(&self) -> &str {
        self.member.as_ref().map(|m| m.membership.room.id.as_str()).unwrap_or("")
    }

    fn error(&self, code: &str, message: impl Into<String>, ref_event_id: &str) {
        let r = (!ref_event_id.is_empty()).then_some(ref_event_id);
        self.link.send_error(self.session_id(), code, message, r);
    }

    fn on_text(&mut self, text: &str) {
        self.hub.metrics().envelope_in();
        let (envelope, inbound) = match parse_inbound(text) {
            Ok(x) => x,
            Err(e) => {
                self.error(e.code(), e.to_string(), "");
                return;
            }
        };
        let event_id = envelope.event_id.as_str();
        if let Inbound::Join(payload) = inbound {
            if self.member.is_some() {
                self.error(codes::ALREADY_JOINED, "this connection already joined a session", event_id);
                return;
            }
            let role = payload.role;
            match self.hub.join(&envelope.session_id, &envelope.sender_id, payload, &self.link) {
                Ok(membership) => {
                    tracing::debug!(session = %membership.room.id, participant = %membership.participant_id, "joined");
                    self.member = Some(Member { membership, role });
                }
                Err(e) => self.error(e.code, e.message, event_id),
            }
            return;
        }
        let Some(member) = &self.member else {
            self.error(codes::NOT_JOINED, "send join first", event_id);
            return;
        };
        let room = Arc::clone(&member.membership.room);
        let pid = member.membership.participant_id.clone();
        let speaks = member.role == Role::Speaker;
        match inbound {
            Inbound::Join(_) => unreachable!("handled above"),
            Inbound::AudioChunk(_) | Inbound::TextMessage(_) if !speaks => {
                self.error(codes::VIEWER_CANNOT_SPEAK, "viewers cannot send speech", event_id);
            }
            Inbound::AudioChunk(payload) => {
                let chunk = match payload.into_chunk(&room.id, &pid) {
                    Ok(c) => c,
                    Err(e) => return self.error(e.code(), e.to_string(), event_id),
                };
                match room.offer_chunk(chunk, event_id) {
                    Ok(offer) => self.ingress_outcome(offer, "transcription", &envelope),
                    Err(e) => self.error(e.code(), e.to_string(), event_id),
                }
            }
            Inbound::TextMessage(payload) => {
                if payload.text.trim().is_empty() {
                    return self.error(codes::MALFORMED_PAYLOAD, "text must not be empty", event_id);
                }
                let offer = room.offer_text(&pid, payload.text, event_id);
                self.ingress_outcome(offer, "transcription", &envelope);
            }
            Inbound::RequestSummary(_) => {
                let offer = room.offer_summary_request(&pid, event_id);
                self.ingress_outcome(offer, "summary", &envelope);
            }
            Inbound::ReplayRequest(payload) => {
                if let Err(e) = room.replay(&pid, payload.sequence_id.as_deref(), payload.speed) {
                    self.error(e.code(), e.to_string(), event_id);
                }
            }
            Inbound::SetPrefs(payload) => {
                let Some(current) = room.participant(&pid) else { return };
                if let Err(e) = room.set_prefs(&pid, payload.apply(&current.prefs)) {
                    self.error(e.code(), e.to_string(), event_id);
                }
            }
        }
    }

    /// A producer whose events keep bouncing off a full queue is cut off
    /// once it exceeds the grace.
    fn ingress_outcome(&mut self, offer: Offer, stage: &str, envelope: &Envelope) {
        let rejected = offer == Offer::Rejected;
        if rejected {
            self.error(
                codes::QUEUE_FULL,
                format!("{stage} queue is full, retry later"),
                &envelope.event_id,
            );
        }
        if self.ingress.record(rejected) == Verdict::Disconnect {
            self.link.close(CloseReason::with_error(
                CLOSE_SLOW_CONSUMER,
                codes::SLOW_CONSUMER,
                self.session_id(),
                "too many consecutive rejected events",
            ));
        }
    }
}
