//! Aggregating client logs into reports, and rendering them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use axs_core::backpressure::Stage;
use axs_core::pipeline::StageKpi;
use axs_core::stats::{self, Distribution};
use serde::Serialize;

use crate::client::{ClientLog, Sample};
use crate::thresholds::{Outcome, Verdict};
use crate::LoadError;

#[derive(Debug, Clone, Serialize)]
pub struct LoadReport {
    pub clients: usize,
    pub connected: usize,
    pub completed: usize,
    pub duration_s: f64,
    /// Client→server script envelopes.
    pub sent: u64,
    pub received: u64,
    pub errors: u64,
    pub errors_by_code: BTreeMap<String, u64>,
    pub mismatches: u64,
    /// `sent / duration_s`: a request is one client→server envelope.
    pub throughput_rps: f64,
    pub received_rps: f64,
    pub latency_ms: Option<Distribution>,
    /// Server-side stage latencies for this run, when the gateway's
    /// metrics endpoint was reachable.
    pub stages: Vec<StageKpi>,
    pub peak_in_flight: u64,
    #[serde(skip)]
    pub samples: Vec<Sample>,
}

impl LoadReport {
    pub fn from_logs(clients: usize, logs: Vec<ClientLog>, duration_s: f64, peak_in_flight: u64) -> Self {
        let mut errors_by_code = BTreeMap::new();
        let (mut sent, mut received, mut mismatches) = (0, 0, 0);
        let (mut connected, mut completed) = (0, 0);
        let mut samples = Vec::new();
        for log in logs {
            sent += log.sent;
            received += log.received;
            mismatches += log.mismatches;
            connected += usize::from(log.connected);
            completed += usize::from(log.completed);
            for (code, n) in log.errors {
                *errors_by_code.entry(code).or_default() += n;
            }
            if let Some(code) = log.kicked {
                *errors_by_code.entry(format!("DISCONNECTED_{code}")).or_default() += 1;
            } else if log.joined && !log.completed {
                *errors_by_code.entry("INCOMPLETE".to_owned()).or_default() += 1;
            }
            samples.extend(log.samples);
        }
        samples.sort_by(|a, b| a.client.cmp(&b.client).then(a.utterance.cmp(&b.utterance)));
        let latencies: Vec<f64> = samples.iter().map(|s| s.latency_ms).collect();
        let duration = duration_s.max(f64::MIN_POSITIVE);
        Self {
            clients,
            connected,
            completed,
            duration_s,
            sent,
            received,
            errors: errors_by_code.values().sum(),
            errors_by_code,
            mismatches,
            throughput_rps: sent as f64 / duration,
            received_rps: received as f64 / duration,
            latency_ms: stats::distribution(&latencies),
            stages: Vec::new(),
            peak_in_flight,
            samples,
        }
    }

    /// Every client joined, streamed its script and got its replies.
    pub fn sustained(&self) -> bool {
        self.completed == self.clients
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageKpi> {
        self.stages.iter().find(|s| s.stage == stage)
    }
}

/// Percentiles of raw latency samples.
pub fn summarize(samples: &[f64]) -> Result<Distribution, LoadError> {
    stats::distribution(samples).ok_or(LoadError::NoSamples)
}

fn ms(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.1}"))
}

/// Per-level table plus the KPI verdicts.
pub fn render_text(levels: &[LoadReport], verdicts: &[Verdict]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>7} {:>9} {:>9} {:>8} {:>9} {:>6} {:>8} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "clients",
        "connected",
        "completed",
        "sent",
        "received",
        "errors",
        "mismatch",
        "dur_s",
        "req/s",
        "p50_ms",
        "p95_ms",
        "p99_ms",
        "inflight"
    );
    for r in levels {
        let d = r.latency_ms.as_ref();
        let _ = writeln!(
            out,
            "{:>7} {:>9} {:>9} {:>8} {:>9} {:>6} {:>8} {:>9.2} {:>9.1} {:>9} {:>9} {:>9} {:>9}",
            r.clients,
            r.connected,
            r.completed,
            r.sent,
            r.received,
            r.errors,
            r.mismatches,
            r.duration_s,
            r.throughput_rps,
            ms(d.map(|d| d.p50)),
            ms(d.map(|d| d.p95)),
            ms(d.map(|d| d.p99)),
            r.peak_in_flight
        );
        if !r.errors_by_code.is_empty() {
            let _ = writeln!(out, "        errors: {:?}", r.errors_by_code);
        }
    }
    if let Some(top) = levels.last() {
        if !top.stages.is_empty() {
            let _ = writeln!(out, "\nstage latency at {} clients (server side, ms):", top.clients);
            for s in &top.stages {
                let _ = writeln!(
                    out,
                    "  {:<13} n={:<7} p50={:<9.2} p95={:<9.2} p99={:<9.2} max={:.2}",
                    s.stage.as_str(),
                    s.latency.count,
                    s.latency.p50,
                    s.latency.p95,
                    s.latency.p99,
                    s.latency.max
                );
            }
        }
    }
    if !verdicts.is_empty() {
        let _ = writeln!(out, "\nKPI verdicts:");
        for v in verdicts {
            let tag = match v.outcome {
                Outcome::Pass => "PASS",
                Outcome::Fail => "FAIL",
                Outcome::Untested => "UNTESTED",
            };
            let _ = writeln!(
                out,
                "  {tag:<8} {} ({} {} {}; measured {})",
                v.kpi,
                v.metric,
                v.op,
                v.target,
                ms(v.measured)
            );
        }
    }
    out
}

/// Raw end-to-end samples, one row per utterance.
pub fn write_samples_csv<W: Write>(w: W, levels: &[LoadReport]) -> Result<(), LoadError> {
    #[derive(Serialize)]
    struct Row {
        level: usize,
        client: usize,
        utterance: usize,
        sent_ms: f64,
        latency_ms: f64,
    }
    let mut csv = csv::Writer::from_writer(w);
    for r in levels {
        for s in &r.samples {
            csv.serialize(Row {
                level: r.clients,
                client: s.client,
                utterance: s.utterance,
                sent_ms: s.sent_ms,
                latency_ms: s.latency_ms,
            })?;
        }
    }
    csv.flush().map_err(|source| LoadError::Io {
        path: "csv".into(),
        source,
    })?;
    Ok(())
}

/// One summary row per load level.
pub fn write_levels_csv<W: Write>(w: W, levels: &[LoadReport]) -> Result<(), LoadError> {
    #[derive(Serialize)]
    struct Row {
        clients: usize,
        connected: usize,
        completed: usize,
        duration_s: f64,
        sent: u64,
        received: u64,
        errors: u64,
        mismatches: u64,
        throughput_rps: f64,
        p50_ms: Option<f64>,
        p95_ms: Option<f64>,
        p99_ms: Option<f64>,
        max_ms: Option<f64>,
        peak_in_flight: u64,
    }
    let mut csv = csv::Writer::from_writer(w);
    for r in levels {
        let d = r.latency_ms.as_ref();
        csv.serialize(Row {
            clients: r.clients,
            connected: r.connected,
            completed: r.completed,
            duration_s: r.duration_s,
            sent: r.sent,
            received: r.received,
            errors: r.errors,
            mismatches: r.mismatches,
            throughput_rps: r.throughput_rps,
            p50_ms: d.map(|d| d.p50),
            p95_ms: d.map(|d| d.p95),
            p99_ms: d.map(|d| d.p99),
            max_ms: d.map(|d| d.max),
            peak_in_flight: r.peak_in_flight,
        })?;
    }
    csv.flush().map_err(|source| LoadError::Io {
        path: "csv".into(),
        source,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(client: usize, latencies: &[f64]) -> ClientLog {
        ClientLog {
            client,
            connected: true,
            joined: true,
            completed: true,
            sent: 10,
            received: 25,
            samples: latencies
                .iter()
                .enumerate()
                .map(|(u, &l)| Sample {
                    client,
                    utterance: u,
                    sent_ms: 0.0,
                    latency_ms: l,
                })
                .collect(),
            ..ClientLog::default()
        }
    }

    #[test]
    fn aggregation_counts_everything_once() {
        let mut bad = log(2, &[]);
        bad.completed = false;
        bad.kicked = Some(4001);
        bad.errors.insert("QUEUE_FULL".into(), 3);
        let r = LoadReport::from_logs(3, vec![log(0, &[100.0]), log(1, &[300.0, 200.0]), bad], 2.0, 4);
        assert_eq!((r.sent, r.received, r.errors), (30, 75, 4));
        assert_eq!(r.errors_by_code["DISCONNECTED_4001"], 1);
        assert_eq!(r.throughput_rps, 15.0);
        assert_eq!(r.latency_ms.unwrap().p50, 200.0);
        assert!(!r.sustained());
    }

    #[test]
    fn a_joined_client_that_times_out_is_an_error() {
        let mut slow = log(0, &[]);
        slow.completed = false;
        let r = LoadReport::from_logs(1, vec![slow], 1.0, 0);
        assert_eq!(r.errors_by_code["INCOMPLETE"], 1);
    }

    #[test]
    fn csv_has_one_row_per_sample() {
        let r = LoadReport::from_logs(2, vec![log(0, &[1.0, 2.0]), log(1, &[3.0])], 1.0, 0);
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, std::slice::from_ref(&r)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("level,client,utterance,sent_ms,latency_ms"));
        let mut buf = Vec::new();
        write_levels_csv(&mut buf, &[r]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }
}
