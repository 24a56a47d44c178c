//! Counters behind `GET /metrics`.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use axs_core::backpressure::{Admission, Stage};
use axs_core::pipeline::{KpiReport, LatencyLedger};
use parking_lot::Mutex;
use serde::Serialize;

#[derive(Debug, Default)]
struct QueueCounters {
    accepted: AtomicU64,
    rejected: AtomicU64,
    dropped: AtomicU64,
}

#[derive(Debug)]
pub struct Metrics {
    started: Instant,
    connections_open: AtomicU64,
    connections_total: AtomicU64,
    envelopes_in: AtomicU64,
    envelopes_out: AtomicU64,
    send_failures: AtomicU64,
    errors: Mutex<BTreeMap<String, u64>>,
    disconnects: Mutex<BTreeMap<String, u64>>,
    queues: [QueueCounters; 5],
    pub ledger: LatencyLedger,
}

impl Default for Metrics {
    fn default() -> Self {
        Self {
            started: Instant::now(),
            connections_open: AtomicU64::new(0),
            connections_total: AtomicU64::new(0),
            envelopes_in: AtomicU64::new(0),
            envelopes_out: AtomicU64::new(0),
            send_failures: AtomicU64::new(0),
            errors: Mutex::new(BTreeMap::new()),
            disconnects: Mutex::new(BTreeMap::new()),
            queues: Default::default(),
            ledger: LatencyLedger::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueueSnapshot {
    /// Events waiting across all live sessions.
    pub depth: usize,
    pub accepted: u64,
    pub rejected: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSnapshot {
    pub uptime_s: f64,
    pub sessions: usize,
    pub connections_open: u64,
    pub connections_total: u64,
    pub envelopes_in: u64,
    pub envelopes_out: u64,
    pub send_failures: u64,
    /// Error envelopes sent, by code.
    pub errors: BTreeMap<String, u64>,
    /// Connections closed by the gateway, by reason.
    pub disconnects: BTreeMap<String, u64>,
    pub queues: BTreeMap<Stage, QueueSnapshot>,
    pub kpi: KpiReport,
}

fn index(stage: Stage) -> usize {
    Stage::ALL.iter().position(|s| *s == stage).expect("stage listed in ALL")
}

impl Metrics {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn connection_opened(&self) {
        self.connections_open.fetch_add(1, Ordering::Relaxed);
        self.connections_total.fetch_add(1, Ordering::Relaxed);
    }

    pub fn connection_closed(&self) {
        self.connections_open.fetch_sub(1, Ordering::Relaxed);
    }

    pub fn envelope_in(&self) {
        self.envelopes_in.fetch_add(1, Ordering::Relaxed);
    }

    pub fn envelope_out(&self) {
        self.envelopes_out.fetch_add(1, Ordering::Relaxed);
    }

    pub fn send_failed(&self) {
        self.send_failures.fetch_add(1, Ordering::Relaxed);
    }

    pub fn error(&self, code: &str) {
        *self.errors.lock().entry(code.to_owned()).or_default() += 1;
    }

    pub fn disconnect(&self, reason: &str) {
        *self.disconnects.lock().entry(reason.to_owned()).or_default() += 1;
    }

    pub fn admission<T>(&self, stage: Stage, outcome: &Admission<T>) {
        let q = &self.queues[index(stage)];
        match outcome {
            Admission::Accepted => q.accepted.fetch_add(1, Ordering::Relaxed),
            Admission::Rejected(_) => q.rejected.fetch_add(1, Ordering::Relaxed),
            Admission::DroppedOldest(_) => {
                q.accepted.fetch_add(1, Ordering::Relaxed);
                q.dropped.fetch_add(1, Ordering::Relaxed)
            }
        };
    }

    pub fn errors_total(&self) -> u64 {
        self.errors.lock().values().sum()
    }

    /// `depths` are the current queue depths summed over live sessions.
    pub fn snapshot(&self, sessions: usize, depths: [usize; 5]) -> MetricsSnapshot {
        let queues = Stage::ALL
            .iter()
            .zip(&self.queues)
            .zip(depths)
            .map(|((stage, q), depth)| {
                (
                    *stage,
                    QueueSnapshot {
                        depth,
                        accepted: q.accepted.load(Ordering::Relaxed),
                        rejected: q.rejected.load(Ordering::Relaxed),
                        dropped: q.dropped.load(Ordering::Relaxed),
                    },
                )
            })
            .collect();
        MetricsSnapshot {
            uptime_s: self.started.elapsed().as_secs_f64(),
            sessions,
            connections_open: self.connections_open.load(Ordering::Relaxed),
            connections_total: self.connections_total.load(Ordering::Relaxed),
            envelopes_in: self.envelopes_in.load(Ordering::Relaxed),
            envelopes_out: self.envelopes_out.load(Ordering::Relaxed),
            send_failures: self.send_failures.load(Ordering::Relaxed),
            errors: self.errors.lock().clone(),
            disconnects: self.disconnects.lock().clone(),
            queues,
            kpi: self.ledger.kpi_report(),
        }
    }

    /// Clears counters and latency samples; open connections are kept.
    pub fn reset(&self) {
        for c in [
            &self.connections_total,
            &self.envelopes_in,
            &self.envelopes_out,
            &self.send_failures,
        ] {
            c.store(0, Ordering::Relaxed);
        }
        self.connections_total
            .store(self.connections_open.load(Ordering::Relaxed), Ordering::Relaxed);
        self.errors.lock().clear();
        self.disconnects.lock().clear();
        for q in &self.queues {
            q.accepted.store(0, Ordering::Relaxed);
            q.rejected.store(0, Ordering::Relaxed);
            q.dropped.store(0, Ordering::Relaxed);
        }
        self.ledger.reset();
    }
}
