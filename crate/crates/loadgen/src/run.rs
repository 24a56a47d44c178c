//! Driving a whole run, or a sweep of runs, against one gateway.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axs_core::pipeline::{KpiReport, StageKpi};
use serde::Serialize;

use crate::client::{simulate_client, ClientSpec, InFlight};
use crate::profile::LoadProfile;
use crate::report::LoadReport;
use crate::LoadError;

pub const SWEEP_LEVELS: [usize; 5] = [10, 100, 250, 500, 1000];

/// Clients per room; the gateway caps rooms at eight.
pub const ROOM_SIZE: usize = 8;

/// Where the gateway lives.
#[derive(Debug, Clone)]
pub struct Target {
    pub ws_url: String,
    /// Base URL for `/metrics`; without it stage latencies are not reported.
    pub http_base: Option<String>,
}

impl Target {
    /// From `http://host:port` (or `ws://host:port`).
    pub fn from_base(base: &str) -> Result<Self, LoadError> {
        let base = base.trim_end_matches('/');
        let rest = base
            .strip_prefix("http://")
            .or_else(|| base.strip_prefix("ws://"))
            .ok_or_else(|| LoadError::InvalidProfile(format!("gateway url must start with http:// or ws://, got {base}")))?;
        let host = rest.trim_end_matches("/ws");
        Ok(Self {
            ws_url: format!("ws://{host}/ws"),
            http_base: Some(format!("http://{host}")),
        })
    }
}

static RUNS: AtomicU64 = AtomicU64::new(0);

/// Opens `profile.clients` connections spread over the ramp, lets each
/// speak its script and merges their logs. Resets the gateway's metrics
/// first so stage latencies cover this run only.
pub async fn run_load(profile: &LoadProfile, target: &Target) -> Result<LoadReport, LoadError> {
    profile.validate()?;
    let http = reqwest::Client::new();
    if let Some(base) = &target.http_base {
        if let Err(e) = http.post(format!("{base}/metrics/reset")).send().await {
            tracing::warn!(error = %e, "could not reset gateway metrics");
        }
    }
    let run = format!("{}-{}", std::process::id(), RUNS.fetch_add(1, Ordering::Relaxed));
    let profile = Arc::new(profile.clone());
    let in_flight = Arc::new(InFlight::default());
    let epoch = Instant::now();
    let clients = profile.clients;

    let tasks: Vec<_> = (0..clients)
        .map(|i| {
            let spec = ClientSpec {
                ws_url: target.ws_url.clone(),
                session_id: format!("load-{run}-r{}", i / ROOM_SIZE),
                index: i,
                epoch,
                in_flight: Arc::clone(&in_flight),
            };
            let delay = Duration::from_secs_f64(profile.ramp_s * i as f64 / clients as f64);
            let profile = Arc::clone(&profile);
            tokio::spawn(async move {
                tokio::time::sleep(delay).await;
                simulate_client(spec, profile).await
            })
        })
        .collect();
    let mut logs = Vec::with_capacity(clients);
    for t in tasks {
        match t.await {
            Ok(log) => logs.push(log),
            Err(e) => tracing::error!(error = %e, "client task failed"),
        }
    }
    let duration_s = epoch.elapsed().as_secs_f64();

    let connected = logs.iter().filter(|l| l.connected).count();
    if connected * 2 < clients {
        return Err(LoadError::TooFewConnected { connected, clients });
    }
    let mut report = LoadReport::from_logs(clients, logs, duration_s, in_flight.peak());
    if let Some(base) = &target.http_base {
        report.stages = fetch_stages(&http, base).await.unwrap_or_default();
    }
    Ok(report)
}

async fn fetch_stages(http: &reqwest::Client, base: &str) -> Option<Vec<StageKpi>> {
    let resp = http.get(format!("{base}/metrics")).send().await.ok()?;
    let mut body: serde_json::Value = resp.json().await.ok()?;
    let kpi: KpiReport = serde_json::from_value(body["kpi"].take()).ok()?;
    Some(kpi.stages)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub levels: Vec<LoadReport>,
    /// Largest level at which every client completed.
    pub max_sustained: Option<usize>,
    /// Why the sweep stopped before its last level.
    pub stopped: Option<String>,
}

/// Runs the profile at each client count in turn, stopping at the first
/// level the gateway does not sustain.
pub async fn sweep(profile: &LoadProfile, levels: &[usize], target: &Target) -> Result<SweepReport, LoadError> {
    let mut out = SweepReport {
        levels: Vec::new(),
        max_sustained: None,
        stopped: None,
    };
    for &clients in levels {
        let p = LoadProfile {
            clients,
            ..profile.clone()
        };
        let report = match run_load(&p, target).await {
            Ok(r) => r,
            Err(LoadError::TooFewConnected { connected, clients }) => {
                out.stopped = Some(format!("{connected} of {clients} clients connected"));
                break;
            }
            Err(e) => return Err(e),
        };
        let sustained = report.sustained();
        if sustained {
            out.max_sustained = Some(clients);
        }
        out.levels.push(report);
        if !sustained {
            out.stopped = Some(format!("{clients} clients not sustained"));
            break;
        }
        // let the previous level's rooms close before the next one opens
        tokio::time::sleep(Duration::from_millis(300)).await;
    }
    Ok(out)
}
