//! What a load run does: how many clients, how fast, saying what.

use std::path::Path;
use std::time::Duration;

use axs_core::chunker::script::{plan_speech, PlannedChunk, ScriptTiming, SpeechPlan};
use axs_core::chunker::ChunkParams;

use crate::LoadError;

pub const BUNDLED_SCRIPT: &str = include_str!("../scripts/meeting.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Pacing {
    /// One chunk per stride, as a live microphone would.
    Realtime,
    /// Next chunk as soon as the previous one is acknowledged.
    Max,
}

#[derive(Debug, Clone)]
pub struct LoadProfile {
    pub clients: usize,
    pub ramp_s: f64,
    /// Audio chunks each client sends; `None` speaks the script once.
    pub msgs_per_client: Option<usize>,
    pub pacing: Pacing,
    pub script: Vec<String>,
    pub sample_rate: u32,
    pub emoji: bool,
    /// Resends an already-used seq once, to exercise the reorder check.
    pub inject_reorder: bool,
    /// How long a client waits for outstanding replies after its last send.
    pub drain_timeout: Duration,
}

impl Default for LoadProfile {
    fn default() -> Self {
        Self {
            clients: 10,
            ramp_s: 1.0,
            msgs_per_client: None,
            pacing: Pacing::Realtime,
            script: parse_script(BUNDLED_SCRIPT),
            sample_rate: 16_000,
            emoji: true,
            inject_reorder: false,
            drain_timeout: Duration::from_secs(15),
        }
    }
}

impl LoadProfile {
    pub fn validate(&self) -> Result<(), LoadError> {
        if self.clients == 0 {
            return Err(LoadError::InvalidProfile("clients must be at least 1".into()));
        }
        if self.msgs_per_client == Some(0) {
            return Err(LoadError::InvalidProfile("msgs_per_client must be at least 1".into()));
        }
        if !self.ramp_s.is_finite() || self.ramp_s < 0.0 {
            return Err(LoadError::InvalidProfile(format!(
                "ramp_s must be a non-negative number, got {}",
                self.ramp_s
            )));
        }
        if !(8_000..=48_000).contains(&self.sample_rate) {
            return Err(LoadError::InvalidProfile(format!(
                "sample_rate {} outside 8000..=48000",
                self.sample_rate
            )));
        }
        Ok(())
    }

    /// The chunks one client sends plus the utterances it should get back.
    pub fn plan(&self, params: ChunkParams) -> ClientPlan {
        let once = plan_speech(&self.script, ScriptTiming::default(), params);
        let Some(wanted) = self.msgs_per_client else {
            return ClientPlan::new(once, None);
        };
        if once.chunks.is_empty() {
            return ClientPlan::new(once, Some(0));
        }
        let passes = wanted.div_ceil(once.chunks.len());
        let lines: Vec<String> = (0..passes).flat_map(|_| self.script.iter().cloned()).collect();
        ClientPlan::new(plan_speech(&lines, ScriptTiming::default(), params), Some(wanted))
    }
}

/// A speech plan cut to the number of chunks actually sent.
#[derive(Debug, Clone)]
pub struct ClientPlan {
    pub chunks: Vec<PlannedChunk>,
    pub expected: Vec<String>,
    /// Utterances whose whole block, trailing silence included, is sent:
    /// these must come back as finals.
    pub settled: usize,
}

impl ClientPlan {
    fn new(plan: SpeechPlan, limit: Option<usize>) -> Self {
        let sent = limit.unwrap_or(plan.chunks.len()).min(plan.chunks.len());
        let settled = settled_utterances(&plan.chunks, sent);
        let mut chunks = plan.chunks;
        chunks.truncate(sent);
        Self {
            chunks,
            expected: plan.expected,
            settled,
        }
    }
}

/// Counts utterances whose block ends within the first `sent` chunks. A
/// block runs from an utterance's completing chunk up to the next chunk
/// that hears speech; the silence in between is what finalises it.
pub fn settled_utterances(chunks: &[PlannedChunk], sent: usize) -> usize {
    let mut settled = 0;
    for (i, c) in chunks.iter().enumerate() {
        if c.completes_speech_of.is_none() {
            continue;
        }
        let block_end = chunks[i + 1..]
            .iter()
            .position(|n| n.oracle_text.is_some())
            .map_or(chunks.len() - 1, |offset| i + offset);
        if block_end < sent {
            settled += 1;
        }
    }
    settled
}

/// One utterance per line; blank lines and `#` comments are skipped.
pub fn parse_script(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

pub fn load_script(path: &Path) -> Result<Vec<String>, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_script(&text))
}
