//! Six-class emotion tagging.
//!
//! The baseline sums per-class weight vectors of lexicon words over an
//! utterance. A negator (`not`, `no`, `never`) in the two preceding tokens
//! cancels a word's contribution. The highest class wins; ties and empty
//! scores resolve to neutral.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{http, BackendError};
use crate::exec::Execution;
use crate::text;

pub const BUNDLED_LEXICON: &str = include_str!("../assets/emotion/lexicon.txt");
pub const BUNDLED_EVAL_SET: &str = include_str!("../assets/emotion/eval.tsv");

const NEGATORS: [&str; 3] = ["not", "no", "never"];
const NEGATION_WINDOW: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum EmotionClass {
    Joy,
    Sadness,
    Anger,
    Fear,
    Surprise,
    Neutral,
}

impl EmotionClass {
    pub const ALL: [EmotionClass; 6] = [
        EmotionClass::Joy,
        EmotionClass::Sadness,
        EmotionClass::Anger,
        EmotionClass::Fear,
        EmotionClass::Surprise,
        EmotionClass::Neutral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EmotionClass::Joy => "joy",
            EmotionClass::Sadness => "sadness",
            EmotionClass::Anger => "anger",
            EmotionClass::Fear => "fear",
            EmotionClass::Surprise => "surprise",
            EmotionClass::Neutral => "neutral",
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    /// Overlay emoji for this class.
    pub fn emoji(self) -> char {
        match self {
            EmotionClass::Joy => '\u{1F600}',
            EmotionClass::Sadness => '\u{1F622}',
            EmotionClass::Anger => '\u{1F620}',
            EmotionClass::Fear => '\u{1F628}',
            EmotionClass::Surprise => '\u{1F632}',
            EmotionClass::Neutral => '\u{1F610}',
        }
    }
}

impl fmt::Display for EmotionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmotionClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EmotionClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| format!("unknown emotion class {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionLabel {
    pub class: EmotionClass,
    pub confidence: f64,
    pub utterance_id: String,
}

/// Emoji overlay for a label.
pub fn emoji_for(label: &EmotionLabel) -> char {
    label.class.emoji()
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EmotionError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

impl EmotionError {
    pub fn code(&self) -> &'static str {
        match self {
            EmotionError::Parse { .. } => "PARSE_ERROR",
            EmotionError::Io { .. } => "IO_ERROR",
        }
    }
}

pub type ClassWeights = [f64; 6];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmotionLexicon {
    entries: HashMap<String, ClassWeights>,
}

impl EmotionLexicon {
    /// Parses `word class:weight[,class:weight...]` lines. Weights must be
    /// non-negative with at least one positive.
    pub fn parse(input: &str) -> Result<Self, EmotionError> {
        let mut entries = HashMap::new();
        for (idx, raw) in input.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| EmotionError::Parse { line: idx + 1, message };
            let (word, spec) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| err("expected `word class:weight`".into()))?;
            let mut weights = [0.0; 6];
            for part in spec.trim().split(',') {
                let (class, weight) = part
                    .trim()
                    .split_once(':')
                    .ok_or_else(|| err(format!("expected class:weight, got {part:?}")))?;
                let class: EmotionClass = class.parse().map_err(err)?;
                let weight: f64 = weight.trim().parse().map_err(|_| err(format!("bad weight {weight:?}")))?;
                if !weight.is_finite() || weight < 0.0 {
                    return Err(err(format!("weight must be a non-negative number, got {weight}")));
                }
                weights[class.index()] = weight;
            }
            if weights.iter().all(|w| *w == 0.0) {
                return Err(err(format!("{word} has no positive weight")));
            }
            entries.insert(word.to_lowercase(), weights);
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, EmotionError> {
        let content = std::fs::read_to_string(path).map_err(|e| EmotionError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&content)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON).expect("bundled emotion lexicon parses")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn weights(&self, word: &str) -> Option<&ClassWeights> {
        self.entries.get(word)
    }

    /// Per-class scores for `text` with negation applied.
    pub fn scores(&self, text: &str) -> ClassWeights {
        let tokens: Vec<String> = text.split_whitespace().map(text::normalize_word).collect();
        let mut scores = [0.0; 6];
        for (i, token) in tokens.iter().enumerate() {
            let negated = tokens[i.saturating_sub(NEGATION_WINDOW)..i]
                .iter()
                .any(|t| NEGATORS.contains(&t.as_str()));
            if negated {
                continue;
            }
            if let Some(w) = self.entries.get(token) {
                for (s, v) in scores.iter_mut().zip(w) {
                    *s += v;
                }
            }
        }
        scores
    }

    /// Classifies free text.
    pub fn classify_text(&self, text: &str) -> (EmotionClass, f64) {
        let scores = self.scores(text);
        let total: f64 = scores.iter().sum();
        let top = scores.iter().copied().fold(0.0, f64::max);
        let winners: Vec<EmotionClass> = EmotionClass::ALL
            .into_iter()
            .filter(|c| top > 0.0 && scores[c.index()] == top)
            .collect();
        let class = match winners.as_slice() {
            [only] => *only,
            _ => EmotionClass::Neutral,
        };
        let confidence = if total > 0.0 { top / total } else { 0.0 };
        (class, confidence)
    }
}

/// Labels one utterance with the lexicon baseline.
pub fn classify_emotion(utterance_id: &str, text: &str, lexicon: &EmotionLexicon) -> EmotionLabel {
    let (class, confidence) = lexicon.classify_text(text);
    EmotionLabel {
        class,
        confidence,
        utterance_id: utterance_id.to_owned(),
    }
}

/// A labelled sentence from an evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledSentence {
    pub sentence: String,
    pub gold: EmotionClass,
}

/// Parses `sentence<TAB>gold_class` lines.
pub fn parse_eval_set(input: &str) -> Result<Vec<LabelledSentence>, EmotionError> {
    let mut out = Vec::new();
    for (idx, raw) in input.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| EmotionError::Parse { line: idx + 1, message };
        let (sentence, gold) = line
            .rsplit_once('\t')
            .ok_or_else(|| err("expected sentence<TAB>class".into()))?;
        out.push(LabelledSentence {
            sentence: sentence.to_owned(),
            gold: gold.parse().map_err(err)?,
        });
    }
    Ok(out)
}

/// The 100-sentence labelled set shipped with the crate.
pub fn bundled_eval_set() -> Vec<LabelledSentence> {
    parse_eval_set(BUNDLED_EVAL_SET).expect("bundled eval set parses")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub total: usize,
    pub correct: usize,
    pub misses: Vec<(String, EmotionClass, EmotionClass)>,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Scores the lexicon against a labelled set.
pub fn evaluate(lexicon: &EmotionLexicon, set: &[LabelledSentence], exec: Execution) -> EvalReport {
    let predictions = exec.map(set, |item| lexicon.classify_text(&item.sentence).0);
    let misses: Vec<_> = set
        .iter()
        .zip(&predictions)
        .filter(|(item, p)| item.gold != **p)
        .map(|(item, p)| (item.sentence.clone(), item.gold, *p))
        .collect();
    EvalReport {
        total: set.len(),
        correct: set.len() - misses.len(),
        misses,
    }
}

/// Emotion backend contract shared by the baseline and a remote model.
#[async_trait]
pub trait EmotionBackend: Send + Sync {
    async fn classify(&self, utterance_id: &str, text: &str) -> Result<EmotionLabel, BackendError>;
}

#[async_trait]
impl EmotionBackend for EmotionLexicon {
    async fn classify(&self, utterance_id: &str, text: &str) -> Result<EmotionLabel, BackendError> {
        Ok(classify_emotion(utterance_id, text, self))
    }
}

#[derive(Serialize)]
struct ClassifyRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct ClassifyResponse {
    class: String,
    confidence: f64,
}

/// Remote classifier: `POST /classify {text} -> {class, confidence}`.
pub struct ExternalEmotion {
    endpoint: String,
    timeout: Duration,
    client: reqwest::Client,
}

impl ExternalEmotion {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout,
            client: http::client(timeout),
        }
    }
}

#[async_trait]
impl EmotionBackend for ExternalEmotion {
    async fn classify(&self, utterance_id: &str, text: &str) -> Result<EmotionLabel, BackendError> {
        let reply: ClassifyResponse = http::post_json(
            &self.client,
            &self.endpoint,
            "/classify",
            self.timeout,
            &ClassifyRequest { text },
        )
        .await?;
        let class = reply.class.parse().map_err(BackendError::MalformedResponse)?;
        Ok(EmotionLabel {
            class,
            confidence: reply.confidence.clamp(0.0, 1.0),
            utterance_id: utterance_id.to_owned(),
        })
    }
}
