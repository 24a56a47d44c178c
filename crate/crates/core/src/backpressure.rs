//! Bounded per-stage queues and the overload policy.
//!
//! Captions and signing are the accessibility payload, so their stages never
//! drop work: a full queue rejects the new event and the producer hears about
//! it. Emotion tags are an enhancement and evict the oldest queued event
//! instead. A producer that keeps hitting full queues is eventually cut off.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Notify;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Transcription,
    Translation,
    Emotion,
    Signgen,
    Summary,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Transcription,
        Stage::Translation,
        Stage::Emotion,
        Stage::Signgen,
        Stage::Summary,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Transcription => "transcription",
            Stage::Translation => "translation",
            Stage::Emotion => "emotion",
            Stage::Signgen => "signgen",
            Stage::Summary => "summary",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverflowPolicy {
    Reject,
    DropOldest,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackpressureError {
    #[error("queue_bound must be positive")]
    ZeroBound,
    #[error("slow_consumer_grace must be positive")]
    ZeroGrace,
    #[error("stage {0} is listed as both lossless and droppable")]
    ConflictingPolicy(Stage),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackpressureConfig {
    pub queue_bound: usize,
    pub lossless_stages: Vec<Stage>,
    pub droppable_stages: Vec<Stage>,
    /// Consecutive rejections tolerated before the producer is disconnected.
    pub slow_consumer_grace: u32,
}

impl Default for BackpressureConfig {
    fn default() -> Self {
        Self {
            queue_bound: 64,
            lossless_stages: vec![Stage::Transcription, Stage::Signgen, Stage::Summary],
            droppable_stages: vec![Stage::Emotion],
            slow_consumer_grace: 32,
        }
    }
}

impl BackpressureConfig {
    pub fn validate(&self) -> Result<(), BackpressureError> {
        if self.queue_bound == 0 {
            return Err(BackpressureError::ZeroBound);
        }
        if self.slow_consumer_grace == 0 {
            return Err(BackpressureError::ZeroGrace);
        }
        match self.droppable_stages.iter().find(|s| self.lossless_stages.contains(s)) {
            Some(s) => Err(BackpressureError::ConflictingPolicy(*s)),
            None => Ok(()),
        }
    }

    /// Stages not named droppable are lossless.
    pub fn policy(&self, stage: Stage) -> OverflowPolicy {
        if self.droppable_stages.contains(&stage) {
            OverflowPolicy::DropOldest
        } else {
            OverflowPolicy::Reject
        }
    }
}

/// Outcome of offering an event to a full or non-full queue.
#[derive(Debug, PartialEq, Eq)]
pub enum Admission<T> {
    Accepted,
    /// The queue was full; the new event is handed back untouched.
    Rejected(T),
    /// The new event was queued after evicting this one.
    DroppedOldest(T),
}

impl<T> Admission<T> {
    pub fn is_rejected(&self) -> bool {
        matches!(self, Admission::Rejected(_))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueStats {
    pub depth: usize,
    pub accepted: u64,
    pub rejected: u64,
    pub dropped: u64,
}

/// Multi-producer, single-consumer bounded queue.
pub struct StageQueue<T> {
    items: Mutex<VecDeque<T>>,
    ready: Notify,
    bound: usize,
    policy: OverflowPolicy,
    closed: AtomicBool,
    accepted: AtomicU64,
    rejected: AtomicU64,
    dropped: AtomicU64,
}

impl<T> StageQueue<T> {
    pub fn new(bound: usize, policy: OverflowPolicy) -> Self {
        assert!(bound > 0, "queue bound must be positive");
        Self {
            items: Mutex::new(VecDeque::with_capacity(bound.min(64))),
            ready: Notify::new(),
            bound,
            policy,
            closed: AtomicBool::new(false),
            accepted: AtomicU64::new(0),
            rejected: AtomicU64::new(0),
            dropped: AtomicU64::new(0),
        }
    }

    pub fn for_stage(stage: Stage, config: &BackpressureConfig) -> Self {
        Self::new(config.queue_bound, config.policy(stage))
    }

    pub fn push(&self, item: T) -> Admission<T> {
        let outcome = {
            let mut items = self.items.lock();
            if items.len() < self.bound {
                items.push_back(item);
                Admission::Accepted
            } else {
                match self.policy {
                    OverflowPolicy::Reject => Admission::Rejected(item),
                    OverflowPolicy::DropOldest => {
                        let oldest = items.pop_front().expect("full queue has a head");
                        items.push_back(item);
                        Admission::DroppedOldest(oldest)
                    }
                }
            }
        };
        match &outcome {
            Admission::Accepted => {
                self.accepted.fetch_add(1, Ordering::Relaxed);
            }
            Admission::Rejected(_) => {
                self.rejected.fetch_add(1, Ordering::Relaxed);
                return outcome;
            }
            Admission::DroppedOldest(_) => {
                self.accepted.fetch_add(1, Ordering::Relaxed);
                self.dropped.fetch_add(1, Ordering::Relaxed);
            }
        }
        self.ready.notify_one();
        outcome
    }

    pub fn try_pop(&self) -> Option<T> {
        self.items.lock().pop_front()
    }

    /// Waits for the next item; `None` once the queue is closed and drained.
    pub async fn pop(&self) -> Option<T> {
        loop {
            if let Some(item) = self.try_pop() {
                return Some(item);
            }
            if self.closed.load(Ordering::Acquire) {
                return None;
            }
            self.ready.notified().await;
        }
    }

    /// Lets the consumer drain what is queued, then stop.
    pub fn close(&self) {
        self.closed.store(true, Ordering::Release);
        self.ready.notify_one();
    }

    pub fn len(&self) -> usize {
        self.items.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn policy(&self) -> OverflowPolicy {
        self.policy
    }

    pub fn stats(&self) -> QueueStats {
        QueueStats {
            depth: self.len(),
            accepted: self.accepted.load(Ordering::Relaxed),
            rejected: self.rejected.load(Ordering::Relaxed),
            dropped: self.dropped.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    Disconnect,
}

/// Counts a producer's consecutive rejections.
#[derive(Debug, Clone)]
pub struct RejectionTracker {
    grace: u32,
    consecutive: u32,
}

impl RejectionTracker {
    pub fn new(grace: u32) -> Self {
        Self { grace, consecutive: 0 }
    }

    /// Records one admission attempt; any acceptance resets the streak.
    pub fn record(&mut self, rejected: bool) -> Verdict {
        if !rejected {
            self.consecutive = 0;
            return Verdict::Keep;
        }
        self.consecutive += 1;
        if self.consecutive > self.grace {
            Verdict::Disconnect
        } else {
            Verdict::Keep
        }
    }

    pub fn consecutive(&self) -> u32 {
        self.consecutive
    }
}
