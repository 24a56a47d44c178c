//! KPI rows and their verdicts.

use std::fmt;
use std::path::Path;

use axs_core::backpressure::Stage;
use serde::{Deserialize, Serialize};

use crate::report::LoadReport;
use crate::LoadError;

pub const BUNDLED: &str = include_str!("../thresholds.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SustainedClients,
    ThroughputRps,
    E2eP95Ms,
    TranscriptionP95Ms,
    TranslationP95Ms,
    EmotionP99Ms,
    Errors,
    Mismatches,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok();
        f.write_str(s.as_ref().and_then(|v| v.as_str()).unwrap_or("?"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "<")]
    Lt,
}

impl Op {
    pub fn holds(self, measured: f64, target: f64) -> bool {
        match self {
            Op::Ge => measured >= target,
            Op::Gt => measured > target,
            Op::Le => measured <= target,
            Op::Lt => measured < target,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::Ge => ">=",
            Op::Gt => ">",
            Op::Le => "<=",
            Op::Lt => "<",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Row {
    pub kpi: String,
    pub metric: Metric,
    pub op: Op,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(rename = "row")]
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Pass,
    Fail,
    /// The run could not measure this row.
    Untested,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub kpi: String,
    pub metric: Metric,
    pub op: Op,
    pub target: f64,
    pub measured: Option<f64>,
    pub outcome: Outcome,
}

/// Measured values a thresholds file can refer to.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Measured {
    pub sustained_clients: Option<f64>,
    pub throughput_rps: Option<f64>,
    pub e2e_p95_ms: Option<f64>,
    pub transcription_p95_ms: Option<f64>,
    pub translation_p95_ms: Option<f64>,
    pub emotion_p99_ms: Option<f64>,
    pub errors: Option<f64>,
    pub mismatches: Option<f64>,
}

impl Measured {
    /// Latency and throughput come from the top sustained level; errors and
    /// mismatches are summed over every sustained level. With no sustained
    /// level at all, the first level stands in so failures still show.
    pub fn from_levels(levels: &[LoadReport]) -> Self {
        let sustained: Vec<&LoadReport> = levels.iter().filter(|r| r.sustained()).collect();
        let Some(top) = sustained.last().copied().or(levels.first()) else {
            return Self::default();
        };
        let counted: Vec<&LoadReport> = if sustained.is_empty() { vec![top] } else { sustained.clone() };
        Self {
            sustained_clients: Some(sustained.last().map_or(0.0, |r| r.clients as f64)),
            throughput_rps: Some(top.throughput_rps),
            e2e_p95_ms: top.latency_ms.map(|d| d.p95),
            transcription_p95_ms: top.stage(Stage::Transcription).map(|s| s.latency.p95),
            translation_p95_ms: top.stage(Stage::Translation).map(|s| s.latency.p95),
            emotion_p99_ms: top.stage(Stage::Emotion).map(|s| s.latency.p99),
            errors: Some(counted.iter().map(|r| r.errors as f64).sum()),
            mismatches: Some(counted.iter().map(|r| r.mismatches as f64).sum()),
        }
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::SustainedClients => self.sustained_clients,
            Metric::ThroughputRps => self.throughput_rps,
            Metric::E2eP95Ms => self.e2e_p95_ms,
            Metric::TranscriptionP95Ms => self.transcription_p95_ms,
            Metric::TranslationP95Ms => self.translation_p95_ms,
            Metric::EmotionP99Ms => self.emotion_p99_ms,
            Metric::Errors => self.errors,
            Metric::Mismatches => self.mismatches,
        }
    }
}

impl Thresholds {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED).expect("bundled thresholds parse")
    }

    pub fn parse(text: &str) -> Result<Self, LoadError> {
        let t: Self = toml::from_str(text).map_err(|e| LoadError::InvalidThresholds(e.to_string()))?;
        if let Some(row) = t.rows.iter().find(|r| !r.target.is_finite()) {
            return Err(LoadError::InvalidThresholds(format!("{}: target must be finite", row.kpi)));
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn evaluate(&self, measured: &Measured) -> Vec<Verdict> {
        self.rows
            .iter()
            .map(|row| {
                let value = measured.get(row.metric);
                let outcome = match value {
                    None => Outcome::Untested,
                    Some(v) if row.op.holds(v, row.target) => Outcome::Pass,
                    Some(_) => Outcome::Fail,
                };
                Verdict {
                    kpi: row.kpi.clone(),
                    metric: row.metric,
                    op: row.op,
                    target: row.target,
                    measured: value,
                    outcome,
                }
            })
            .collect()
    }
}
