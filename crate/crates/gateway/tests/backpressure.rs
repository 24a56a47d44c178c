//! Bounded stage queues under overload, driven by deliberately slow backends.

mod common;

use std::net::SocketAddr;
use std::time::Duration;

use axs_core::recognizer::RecognizerBackend;
use axum::routing::post;
use axum::{Json, Router};
use common::*;
use serde_json::{json, Value};

async fn slow_backend(delay: Duration) -> String {
    let app = Router::new()
        .route(
            "/recognize",
            post(move || async move {
                tokio::time::sleep(delay).await;
                Json(json!({ "text": "slow words", "confidence": 0.9 }))
            }),
        )
        .route(
            "/classify",
            post(move || async move {
                tokio::time::sleep(delay).await;
                Json(json!({ "class": "joy", "confidence": 0.8 }))
            }),
        );
    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], 0)))
        .await
        .unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}")
}

fn raw_chunk(seq: u64) -> Value {
    let c = axs_core::chunker::script::PlannedChunk {
        seq,
        start_time: seq as f64 * 0.5,
        duration: 1.0,
        content_duration: 1.0,
        oracle_text: None,
        completes_speech_of: None,
    };
    chunk_payload(&c)
}

#[tokio::test]
async fn full_ingress_queue_rejects_then_disconnects() {
    let mut cfg = config();
    cfg.recognizer.backend = RecognizerBackend::External;
    cfg.recognizer.endpoint = Some(slow_backend(Duration::from_secs(4)).await);
    cfg.recognizer.timeout_ms = 10_000;
    cfg.backpressure.queue_bound = 1;
    let gw = start(&cfg).await;
    let mut c = Client::join(&gw, "flood", "alice", "speaker", serde_json::json!({})).await;

    // the first chunk occupies the worker and the second fills the queue
    c.send("audio_chunk", raw_chunk(0)).await;
    tokio::time::sleep(Duration::from_millis(100)).await;
    c.send("audio_chunk", raw_chunk(1)).await;
    for seq in 2..60 {
        c.send("audio_chunk", raw_chunk(seq)).await;
    }
    let (close, seen) = c.until_closed(Duration::from_secs(3)).await;
    assert_eq!(close, Some((4001, "SLOW_CONSUMER".into())));
    let errors: Vec<&str> = of_type(&seen, "error")
        .iter()
        .map(|e| e["payload"]["code"].as_str().unwrap())
        .collect();
    let full = errors.iter().filter(|c| **c == "QUEUE_FULL").count();
    // grace is 32: the 33rd consecutive rejection is the last one
    assert_eq!(full, 33, "{errors:?}");
    assert_eq!(errors.last(), Some(&"SLOW_CONSUMER"));
    assert!(of_type(&seen, "error")
        .iter()
        .filter(|e| e["payload"]["code"] == "QUEUE_FULL")
        .all(|e| e["payload"]["retryable"] == true));

    let m = get_json(&gw, "/metrics").await;
    assert_eq!(m["disconnects"]["SLOW_CONSUMER"], 1);
    assert_eq!(m["queues"]["transcription"]["rejected"], 33);
}

#[tokio::test]
async fn emotion_overload_drops_oldest_silently() {
    let mut cfg = config();
    cfg.emotion.endpoint = Some(slow_backend(Duration::from_millis(400)).await);
    cfg.emotion.timeout_ms = 5_000;
    cfg.backpressure.queue_bound = 2;
    let gw = start(&cfg).await;
    let mut a = Client::join(&gw, "emo-flood", "alice", "speaker", viewer_prefs("en", false, 1.0)).await;
    let mut b = Client::join(&gw, "emo-flood", "bob", "viewer", viewer_prefs("en", true, 1.0)).await;

    let lines = 8;
    for i in 0..lines {
        a.send("text_message", json!({ "text": format!("update number {i}") })).await;
        a.expect_where(|e| e["type"] == "transcript" && e["payload"]["final"] == true, "final", WAIT)
            .await;
    }
    let mut signs = 0;
    while signs < lines {
        b.expect("sign_sequence").await;
        signs += 1;
    }
    let frames = b.drain(Duration::from_millis(2000)).await;
    let tagged = of_type(&frames, "emotion").len();
    assert!(tagged >= 1 && tagged < lines, "{tagged} of {lines} tagged");

    let m = get_json(&gw, "/metrics").await;
    assert!(m["queues"]["emotion"]["dropped"].as_u64().unwrap() >= 1, "{m}");
    assert_eq!(m["queues"]["emotion"]["rejected"], 0);
    assert!(m["errors"].get("QUEUE_FULL").is_none(), "{m}");
    // the lossless stages saw every utterance
    assert_eq!(m["queues"]["signgen"]["accepted"], lines);
    assert_eq!(m["queues"]["summary"]["accepted"], lines);
    assert!(of_type(&a.drain(Duration::from_millis(100)).await, "error").is_empty());
}
