//! Windowed extractive meeting minutes.
//!
//! Each session keeps an append-only transcript. A window runs from the last
//! summary cut to "now"; cuts happen on the schedule or on request, so the
//! windows tile the session with no gaps. Within a window, sentences are
//! scored by content-word frequency and the best few become key points, while
//! cue phrases route sentences into decisions or action items.

use std::collections::{HashMap, HashSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{http, BackendError};
use crate::chunker::Utterance;
use crate::text::normalize_word;
use crate::translator::{TranslateError, Translator};

pub const DEFAULT_K: usize = 5;

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "am", "an", "and", "any", "are", "as", "at", "be", "been", "before", "being", "but",
    "by", "can", "could", "did", "do", "does", "for", "from", "had", "has", "have", "he", "her", "here", "him", "his", "how",
    "i", "if", "in", "into", "is", "it", "its", "just", "let", "lets", "me", "more", "my", "no", "not", "now", "of", "on", "or",
    "our", "out", "over", "she", "so", "some", "than", "that", "the", "their", "them", "then", "there", "these", "they", "this",
    "those", "to", "too", "up", "us", "very", "was", "we", "were", "what", "when", "which", "who", "why", "with", "would", "you",
    "your",
];

const WEEKDAYS: &[&str] = &["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"];
const WEEKDAY_SLOT: &str = "<weekday>";

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SummaryError {
    #[error("session {0} is unknown")]
    SessionUnknown(String),
    #[error("nothing to summarise in this window")]
    EmptyWindow,
    #[error("invalid summary config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl SummaryError {
    pub fn code(&self) -> &'static str {
        match self {
            SummaryError::SessionUnknown(_) => "SESSION_UNKNOWN",
            SummaryError::EmptyWindow => "EMPTY_WINDOW",
            SummaryError::InvalidConfig(_) => "INVALID_CONFIG",
            SummaryError::Backend(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummaryConfig {
    pub interval_s: f64,
    pub k: usize,
    pub decision_cues: Vec<String>,
    /// `<weekday>` matches any day name.
    pub action_cues: Vec<String>,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Self {
            interval_s: 900.0,
            k: DEFAULT_K,
            decision_cues: owned(&["decided", "agreed", "approved"]),
            action_cues: owned(&["will", "must", "todo", "action item", "action items", "by <weekday>"]),
        }
    }
}

impl SummaryConfig {
    pub fn validate(&self) -> Result<(), SummaryError> {
        if self.interval_s.is_nan() || self.interval_s <= 0.0 {
            return Err(SummaryError::InvalidConfig("interval_s must be positive".into()));
        }
        if self.k == 0 {
            return Err(SummaryError::InvalidConfig("k must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub utterance_id: String,
    pub speaker_id: String,
    pub text: String,
    /// Arrival time, seconds since the session started.
    pub at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub session_id: String,
    pub window: (f64, f64),
    pub key_points: Vec<String>,
    pub decisions: Vec<String>,
    pub action_items: Vec<String>,
    pub language: String,
}

impl SummaryRecord {
    pub fn sentences(&self) -> impl Iterator<Item = &String> {
        self.key_points.iter().chain(&self.decisions).chain(&self.action_items)
    }
}

/// A closed summary window and the transcript it covers.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub t_start: f64,
    pub t_end: f64,
    pub entries: Vec<TranscriptEntry>,
}

impl Window {
    pub fn text(&self) -> String {
        self.entries.iter().map(|e| e.text.as_str()).collect::<Vec<_>>().join(" ")
    }
}

/// One session's transcript and summary cursor.
#[derive(Debug, Clone)]
pub struct SessionTranscript {
    pub session_id: String,
    pub language: String,
    entries: Vec<TranscriptEntry>,
    seen: HashSet<String>,
    cursor: usize,
    last_cut: f64,
}

impl SessionTranscript {
    pub fn new(session_id: impl Into<String>, language: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            language: language.into(),
            entries: Vec::new(),
            seen: HashSet::new(),
            cursor: 0,
            last_cut: 0.0,
        }
    }

    /// Appends an utterance; a repeated utterance id is ignored (`false`).
    pub fn accumulate(&mut self, utterance: &Utterance, at: f64) -> bool {
        if !self.seen.insert(utterance.utterance_id.clone()) {
            tracing::warn!(utterance_id = %utterance.utterance_id, "duplicate utterance ignored");
            return false;
        }
        self.entries.push(TranscriptEntry {
            utterance_id: utterance.utterance_id.clone(),
            speaker_id: utterance.speaker_id.clone(),
            text: utterance.text.clone(),
            at,
        });
        true
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn pending(&self) -> &[TranscriptEntry] {
        &self.entries[self.cursor..]
    }

    pub fn last_cut(&self) -> f64 {
        self.last_cut
    }

    fn cut(&mut self, now: f64) -> Window {
        let window = Window {
            t_start: self.last_cut,
            t_end: now.max(self.last_cut),
            entries: self.pending().to_vec(),
        };
        self.cursor = self.entries.len();
        self.last_cut = window.t_end;
        window
    }

    /// Scheduled trigger: a window once `interval_s` has passed and there is
    /// new transcript to cover.
    pub fn schedule_tick(&mut self, now: f64, interval_s: f64) -> Option<Window> {
        (now - self.last_cut >= interval_s && !self.pending().is_empty()).then(|| self.cut(now))
    }

    /// On-demand trigger over everything since the last cut.
    pub fn on_demand(&mut self, now: f64) -> Result<Window, SummaryError> {
        if self.pending().is_empty() {
            return Err(SummaryError::EmptyWindow);
        }
        Ok(self.cut(now))
    }
}

/// Accumulators for many sessions.
#[derive(Debug, Default)]
pub struct Summarizer {
    sessions: HashMap<String, SessionTranscript>,
}

impl Summarizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn open(&mut self, session_id: &str, language: &str) {
        self.sessions
            .entry(session_id.to_owned())
            .or_insert_with(|| SessionTranscript::new(session_id, language));
    }

    pub fn close(&mut self, session_id: &str) -> Option<SessionTranscript> {
        self.sessions.remove(session_id)
    }

    pub fn session(&self, session_id: &str) -> Option<&SessionTranscript> {
        self.sessions.get(session_id)
    }

    fn get(&mut self, session_id: &str) -> Result<&mut SessionTranscript, SummaryError> {
        self.sessions
            .get_mut(session_id)
            .ok_or_else(|| SummaryError::SessionUnknown(session_id.to_owned()))
    }

    pub fn accumulate(&mut self, session_id: &str, utterance: &Utterance, at: f64) -> Result<bool, SummaryError> {
        Ok(self.get(session_id)?.accumulate(utterance, at))
    }

    pub fn schedule_tick(&mut self, session_id: &str, now: f64, interval_s: f64) -> Result<Option<Window>, SummaryError> {
        Ok(self.get(session_id)?.schedule_tick(now, interval_s))
    }

    pub fn on_demand(&mut self, session_id: &str, now: f64) -> Result<Window, SummaryError> {
        self.get(session_id)?.on_demand(now)
    }
}

/// Splits on terminal punctuation followed by whitespace; every piece is a
/// verbatim slice of `text`.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|(_, n)| n.is_whitespace()) {
            let end = i + c.len_utf8();
            let piece = text[start..end].trim();
            if !piece.is_empty() {
                out.push(piece);
            }
            start = end;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

fn words(sentence: &str) -> Vec<String> {
    sentence
        .split_whitespace()
        .map(normalize_word)
        .filter(|w| !w.is_empty())
        .collect()
}

fn is_content(word: &str) -> bool {
    !STOPWORDS.contains(&word)
}

fn matches_cue(words: &[String], cue: &str) -> bool {
    let pattern: Vec<&str> = cue.split_whitespace().collect();
    if pattern.is_empty() || pattern.len() > words.len() {
        return false;
    }
    words.windows(pattern.len()).any(|w| {
        w.iter().zip(&pattern).all(|(word, p)| {
            if *p == WEEKDAY_SLOT {
                WEEKDAYS.contains(&word.as_str())
            } else {
                word == p
            }
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cue {
    Decision,
    Action,
}

/// Decision cues win over action cues ("We agreed Sam will ..." is a decision).
pub fn classify_cue(sentence: &str, config: &SummaryConfig) -> Option<Cue> {
    let w = words(sentence);
    if config.decision_cues.iter().any(|c| matches_cue(&w, c)) {
        Some(Cue::Decision)
    } else if config.action_cues.iter().any(|c| matches_cue(&w, c)) {
        Some(Cue::Action)
    } else {
        None
    }
}

/// Sum of window-normalised content-word frequencies for each sentence.
pub fn score_sentences(sentences: &[&str]) -> Vec<f64> {
    let tokenized: Vec<Vec<String>> = sentences.iter().map(|s| words(s)).collect();
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for w in tokenized.iter().flatten().filter(|w| is_content(w)) {
        *freq.entry(w.as_str()).or_default() += 1;
    }
    let max = freq.values().copied().max().unwrap_or(1) as f64;
    tokenized
        .iter()
        .map(|ws| {
            ws.iter()
                .filter(|w| is_content(w))
                .map(|w| freq[w.as_str()] as f64 / max)
                .sum()
        })
        .collect()
}

pub fn extract_summary(
    session_id: &str,
    window: &Window,
    language: &str,
    config: &SummaryConfig,
) -> Result<SummaryRecord, SummaryError> {
    let sentences: Vec<&str> = window.entries.iter().flat_map(|e| split_sentences(&e.text)).collect();
    if sentences.is_empty() {
        return Err(SummaryError::EmptyWindow);
    }
    let scores = score_sentences(&sentences);
    let mut record = SummaryRecord {
        session_id: session_id.to_owned(),
        window: (window.t_start, window.t_end),
        key_points: Vec::new(),
        decisions: Vec::new(),
        action_items: Vec::new(),
        language: language.to_owned(),
    };
    let mut candidates = Vec::new();
    for (i, s) in sentences.iter().enumerate() {
        match classify_cue(s, config) {
            Some(Cue::Decision) => record.decisions.push(s.to_string()),
            Some(Cue::Action) => record.action_items.push(s.to_string()),
            None => candidates.push(i),
        }
    }
    // highest score first, earlier sentence on ties
    candidates.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    candidates.truncate(config.k);
    candidates.sort_unstable();
    record.key_points = candidates.into_iter().map(|i| sentences[i].to_string()).collect();
    Ok(record)
}

#[derive(Debug)]
pub struct TargetSummary {
    pub target: String,
    pub result: Result<SummaryRecord, TranslateError>,
}

/// Translates every sentence of `record` into each target; failures are
/// reported per target.
pub async fn summarize_multilingual(record: &SummaryRecord, targets: &[String], translator: &Translator) -> Vec<TargetSummary> {
    let mut out = Vec::with_capacity(targets.len());
    for target in targets {
        let result = translate_record(record, target, translator).await;
        out.push(TargetSummary {
            target: target.clone(),
            result,
        });
    }
    out
}

async fn translate_record(
    record: &SummaryRecord,
    target: &str,
    translator: &Translator,
) -> Result<SummaryRecord, TranslateError> {
    let source = record.language.as_str();
    if !translator.is_registered(source, target) {
        return Err(TranslateError::PairNotRegistered(format!("{source}->{target}")));
    }
    let mut lists = Vec::with_capacity(3);
    for list in [&record.key_points, &record.decisions, &record.action_items] {
        let mut translated = Vec::with_capacity(list.len());
        for s in list {
            translated.push(translator.translate_text(s, source, target).await?);
        }
        lists.push(translated);
    }
    let action_items = lists.pop().unwrap_or_default();
    let decisions = lists.pop().unwrap_or_default();
    let key_points = lists.pop().unwrap_or_default();
    Ok(SummaryRecord {
        key_points,
        decisions,
        action_items,
        language: target.to_owned(),
        ..record.clone()
    })
}

#[derive(Serialize)]
struct SummarizeRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct SummarizeResponse {
    summary: String,
}

/// Adapter for a model-serving summariser (`POST /summarize {text} -> {summary}`).
/// The returned summary becomes a single key point.
pub struct ExternalSummarizer {
    endpoint: String,
    timeout: Duration,
    client: reqwest::Client,
}

impl ExternalSummarizer {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout,
            client: http::client(timeout),
        }
    }

    pub async fn summarize(&self, session_id: &str, window: &Window, language: &str) -> Result<SummaryRecord, SummaryError> {
        let text = window.text();
        if text.trim().is_empty() {
            return Err(SummaryError::EmptyWindow);
        }
        let reply: SummarizeResponse = http::post_json(
            &self.client,
            &self.endpoint,
            "/summarize",
            self.timeout,
            &SummarizeRequest { text: &text },
        )
        .await?;
        Ok(SummaryRecord {
            session_id: session_id.to_owned(),
            window: (window.t_start, window.t_end),
            key_points: vec![reply.summary],
            decisions: Vec::new(),
            action_items: Vec::new(),
            language: language.to_owned(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn utt(id: &str, text: &str) -> Utterance {
        Utterance {
            utterance_id: id.into(),
            speaker_id: "s".into(),
            seq: 0,
            text: text.into(),
            tokens: text.split_whitespace().map(str::to_owned).collect(),
            t0: 0.0,
            t1: 1.0,
            language: "en".into(),
        }
    }

    fn window(texts: &[&str]) -> Window {
        Window {
            t_start: 0.0,
            t_end: 60.0,
            entries: texts
                .iter()
                .enumerate()
                .map(|(i, t)| TranscriptEntry {
                    utterance_id: i.to_string(),
                    speaker_id: "s".into(),
                    text: t.to_string(),
                    at: i as f64,
                })
                .collect(),
        }
    }

    /// Independent scorer: recount everything from scratch per sentence.
    fn oracle_best(sentences: &[&str]) -> usize {
        let all: Vec<String> = sentences
            .iter()
            .flat_map(|s| s.split_whitespace().map(normalize_word))
            .filter(|w| !w.is_empty() && !STOPWORDS.contains(&w.as_str()))
            .collect();
        let max = all.iter().map(|w| all.iter().filter(|x| *x == w).count()).max().unwrap_or(1) as f64;
        let score = |s: &str| -> f64 {
            s.split_whitespace()
                .map(normalize_word)
                .filter(|w| !w.is_empty() && !STOPWORDS.contains(&w.as_str()))
                .map(|w| all.iter().filter(|x| **x == w).count() as f64 / max)
                .sum()
        };
        let mut best = 0;
        for i in 1..sentences.len() {
            if score(sentences[i]) > score(sentences[best]) {
                best = i;
            }
        }
        best
    }

    #[test]
    fn append_and_dedup() {
        let mut t = SessionTranscript::new("s", "en");
        assert!(t.accumulate(&utt("a", "One."), 1.0));
        assert!(t.accumulate(&utt("b", "Two."), 2.0));
        assert!(t.accumulate(&utt("c", "Three."), 3.0));
        assert!(!t.accumulate(&utt("a", "One."), 4.0));
        assert_eq!(t.entries().len(), 3);
        let mut reg = Summarizer::new();
        assert_eq!(
            reg.accumulate("nope", &utt("a", "x"), 0.0).unwrap_err().code(),
            "SESSION_UNKNOWN"
        );
    }

    #[test]
    fn schedule_rules() {
        let mut t = SessionTranscript::new("s", "en");
        assert!(t.schedule_tick(900.0, 900.0).is_none());
        t.accumulate(&utt("a", "Budget review."), 100.0);
        assert!(t.schedule_tick(899.0, 900.0).is_none());
        let w = t.schedule_tick(900.0, 900.0).unwrap();
        assert_eq!((w.t_start, w.t_end, w.entries.len()), (0.0, 900.0, 1));
        let mut od = SessionTranscript::new("s", "en");
        od.accumulate(&utt("a", "Hi."), 10.0);
        let w = od.on_demand(120.0).unwrap();
        assert_eq!((w.t_start, w.t_end), (0.0, 120.0));
        assert_eq!(od.on_demand(130.0).unwrap_err().code(), "EMPTY_WINDOW");
    }

    #[test]
    fn k1_picks_max_score() {
        let texts = ["The budget is tight.", "Budget planning needs budget data.", "Hello there."];
        let rec = extract_summary(
            "s",
            &window(&texts),
            "en",
            &SummaryConfig {
                k: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(rec.key_points, vec![texts[oracle_best(&texts)].to_string()]);
    }

    #[test]
    fn cues() {
        let rec = extract_summary(
            "s",
            &window(&[
                "We agreed to ship Friday.",
                "Sam will draft the notes.",
                "Send it by friday.",
                "Weather is nice.",
            ]),
            "en",
            &SummaryConfig::default(),
        )
        .unwrap();
        assert_eq!(rec.decisions, vec!["We agreed to ship Friday."]);
        assert_eq!(rec.action_items, vec!["Sam will draft the notes.", "Send it by friday."]);
        assert_eq!(rec.key_points, vec!["Weather is nice."]);
        let empty = Window {
            t_start: 0.0,
            t_end: 1.0,
            entries: vec![],
        };
        assert_eq!(
            extract_summary("s", &empty, "en", &SummaryConfig::default())
                .unwrap_err()
                .code(),
            "EMPTY_WINDOW"
        );
    }

    #[test]
    fn sentence_split_is_verbatim() {
        let text = "Version 2.5 ships. Are we ready? Yes!";
        assert_eq!(split_sentences(text), vec!["Version 2.5 ships.", "Are we ready?", "Yes!"]);
        assert_eq!(split_sentences("no terminal"), vec!["no terminal"]);
    }

    #[tokio::test]
    async fn multilingual() {
        let rec = extract_summary(
            "s",
            &window(&["We agreed to meet.", "The team will review the budget.", "Good morning."]),
            "en",
            &SummaryConfig::default(),
        )
        .unwrap();
        let translator = Translator::with_bundled();
        let out = summarize_multilingual(&rec, &["fr".into(), "de".into()], &translator).await;
        let fr = out[0].result.as_ref().unwrap();
        assert_eq!(fr.language, "fr");
        assert_eq!(
            (fr.key_points.len(), fr.decisions.len(), fr.action_items.len()),
            (rec.key_points.len(), rec.decisions.len(), rec.action_items.len())
        );
        assert_eq!(out[1].result.as_ref().unwrap_err().code(), "PAIR_NOT_REGISTERED");
        assert!(summarize_multilingual(&rec, &[], &translator).await.is_empty());
    }

    proptest! {
        #[test]
        fn extractive_guarantee(texts in prop::collection::vec("[A-Za-z ,]{0,30}[.!?]?", 1..12), k in 1usize..6) {
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let w = window(&refs);
            let joined = w.text();
            match extract_summary("s", &w, "en", &SummaryConfig { k, ..Default::default() }) {
                Ok(rec) => {
                    prop_assert!(rec.key_points.len() <= k);
                    for s in rec.sentences() {
                        prop_assert!(joined.contains(s.as_str()));
                    }
                }
                Err(e) => prop_assert_eq!(e.code(), "EMPTY_WINDOW"),
            }
        }
    }
}
