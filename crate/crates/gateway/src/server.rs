//! HTTP surface: `/ws`, `/health`, `/metrics`.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::WebSocketUpgrade;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::config::GatewayConfig;
use crate::conn::{handle_socket, ConnSettings};
use crate::hub::{Hub, HubSettings};
use crate::metrics::{Metrics, MetricsSnapshot};
use crate::services::{Services, StartupError};

#[derive(Clone)]
struct AppState {
    hub: Arc<Hub>,
    conn: ConnSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Health {
    pub status: String,
    pub dictionary_version: String,
    pub dictionary_entries: usize,
    pub sessions: usize,
    pub connections: u64,
}

pub fn router(config: &GatewayConfig, services: Arc<Services>) -> (Router, Arc<Hub>) {
    let hub = Arc::new(Hub::new(services, Arc::new(Metrics::new()), HubSettings::from(config)));
    let state = AppState {
        hub: Arc::clone(&hub),
        conn: ConnSettings {
            join_timeout: Duration::from_millis(config.join_timeout_ms),
            outbound_buffer: config.outbound_buffer,
            grace: config.backpressure.slow_consumer_grace,
            max_frame_bytes: config.max_frame_bytes,
        },
    };
    let app = Router::new()
        .route("/ws", get(ws))
        .route("/health", get(health))
        .route("/metrics", get(metrics))
        .route("/metrics/reset", post(reset_metrics))
        .with_state(state);
    (app, hub)
}

async fn ws(State(state): State<AppState>, upgrade: WebSocketUpgrade) -> impl IntoResponse {
    // the connection enforces the configured limit with a close code;
    // this is only a backstop against absurd frames
    let hard_cap = state.conn.max_frame_bytes.saturating_mul(4);
    upgrade
        .max_frame_size(hard_cap)
        .max_message_size(hard_cap)
        .on_upgrade(move |socket| handle_socket(socket, state.hub, state.conn))
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    let dict = &state.hub.services().dictionary;
    Json(Health {
        status: "ok".into(),
        dictionary_version: format!("{:016x}", dict.version()),
        dictionary_entries: dict.len(),
        sessions: state.hub.session_count(),
        connections: state.hub.metrics().snapshot(0, [0; 5]).connections_open,
    })
}

async fn metrics(State(state): State<AppState>) -> Json<MetricsSnapshot> {
    let hub = &state.hub;
    Json(hub.metrics().snapshot(hub.session_count(), hub.queue_depths()))
}

async fn reset_metrics(State(state): State<AppState>) -> StatusCode {
    state.hub.metrics().reset();
    StatusCode::NO_CONTENT
}

/// A running gateway.
pub struct Gateway {
    pub addr: SocketAddr,
    pub hub: Arc<Hub>,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl Gateway {
    /// Binds and serves in a background task. Port 0 picks a free port.
    pub async fn start(config: &GatewayConfig) -> Result<Self, StartupError> {
        let services = Arc::new(Services::load(config)?);
        Self::start_with(config, services).await
    }

    pub async fn start_with(config: &GatewayConfig, services: Arc<Services>) -> Result<Self, StartupError> {
        let bind = config.bind_addr();
        let listener = TcpListener::bind(&bind).await.map_err(|e| StartupError::BindFailed {
            addr: bind.clone(),
            message: e.to_string(),
        })?;
        let addr = listener.local_addr().map_err(|e| StartupError::BindFailed {
            addr: bind,
            message: e.to_string(),
        })?;
        let (app, hub) = router(config, services);
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        });
        tracing::info!(%addr, "gateway listening");
        Ok(Self {
            addr,
            hub,
            shutdown: Some(tx),
            task,
        })
    }

    pub fn ws_url(&self) -> String {
        format!("ws://{}/ws", self.addr)
    }

    pub fn http_url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    /// Resolves when the server stops on its own (it normally does not).
    pub async fn wait(&mut self) -> std::io::Result<()> {
        match (&mut self.task).await {
            Ok(r) => r,
            Err(e) => Err(std::io::Error::other(e)),
        }
    }

    /// Stops accepting connections; open sockets are dropped.
    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if tokio::time::timeout(Duration::from_secs(2), &mut self.task).await.is_err() {
            self.task.abort();
        }
    }
}
