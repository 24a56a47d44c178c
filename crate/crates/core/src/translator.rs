//! Translation stage.
//!
//! Language pairs live in a read-mostly registry. A pair is served either by
//! the word-level dictionary baseline or by a remote model server
//! (`POST /translate {text, source, target} -> {text}`).
//!
//! The baseline replaces every token found in the bilingual lexicon, matching
//! case-insensitively and keeping the capitalisation of the first letter and
//! any surrounding punctuation; unknown tokens pass through unchanged.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{http, BackendError};
use crate::chunker::Utterance;
use crate::text;

/// English to French lexicon shipped with the crate.
pub const BUNDLED_EN_FR: &str = include_str!("../assets/lexicons/en-fr.tsv");

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TranslateError {
    #[error("language pair {0} is not registered")]
    PairNotRegistered(String),
    #[error("invalid language pair {0}")]
    InvalidPair(String),
    #[error("baseline pair {0} needs a lexicon")]
    MissingLexicon(String),
    #[error("lexicon line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read lexicon {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

impl TranslateError {
    pub fn code(&self) -> &'static str {
        match self {
            TranslateError::PairNotRegistered(_) => "PAIR_NOT_REGISTERED",
            TranslateError::InvalidPair(_) => "INVALID_PAIR",
            TranslateError::MissingLexicon(_) => "MISSING_LEXICON",
            TranslateError::Parse { .. } => "PARSE_ERROR",
            TranslateError::Io { .. } => "IO_ERROR",
            TranslateError::Backend(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PairBackend {
    #[default]
    Baseline,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LangPair {
    pub source: String,
    pub target: String,
    #[serde(default)]
    pub backend: PairBackend,
}

impl LangPair {
    pub fn new(source: &str, target: &str, backend: PairBackend) -> Self {
        Self {
            source: source.to_ascii_lowercase(),
            target: target.to_ascii_lowercase(),
            backend,
        }
    }

    fn key(&self) -> (String, String) {
        (self.source.clone(), self.target.clone())
    }
}

impl fmt::Display for LangPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.source, self.target)
    }
}

/// BCP-47-shaped: alphanumeric subtags of 1 to 8 characters joined by '-'.
pub fn is_language_code(code: &str) -> bool {
    !code.is_empty()
        && code
            .split('-')
            .all(|tag| (1..=8).contains(&tag.len()) && tag.chars().all(|c| c.is_ascii_alphanumeric()))
}

/// Single-token bilingual dictionary, keyed by lowercase source word.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: HashMap<String, String>,
}

impl Lexicon {
    /// Parses `source<TAB>target` lines; blank lines and `#` comments are skipped.
    pub fn parse(input: &str) -> Result<Self, TranslateError> {
        let mut entries = HashMap::new();
        for (idx, raw) in input.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let parse_err = |message: &str| TranslateError::Parse {
                line: idx + 1,
                message: message.to_owned(),
            };
            let (source, target) = line.split_once('\t').ok_or_else(|| parse_err("expected source<TAB>target"))?;
            let (source, target) = (source.trim(), target.trim());
            if source.is_empty() || target.is_empty() {
                return Err(parse_err("empty field"));
            }
            if source.contains(char::is_whitespace) || target.contains(char::is_whitespace) {
                return Err(parse_err("entries must be single tokens"));
            }
            entries.insert(source.to_lowercase(), target.to_owned());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, TranslateError> {
        let content = std::fs::read_to_string(path).map_err(|e| TranslateError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&content)
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        Self {
            entries: pairs.into_iter().map(|(s, t)| (s.to_lowercase(), t.to_owned())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&str> {
        self.entries.get(&word.to_lowercase()).map(String::as_str)
    }

    /// Token-by-token dictionary translation.
    pub fn translate_text(&self, source: &str) -> String {
        source
            .split_whitespace()
            .map(|token| self.translate_token(token))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn translate_token(&self, token: &str) -> String {
        let (lead, core, trail) = text::split_affixes(token);
        match self.get(core) {
            Some(target) => {
                let target = if text::starts_uppercase(core) {
                    text::capitalize_first(target)
                } else {
                    target.to_owned()
                };
                format!("{lead}{target}{trail}")
            }
            None => token.to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Translation {
    pub utterance_id: String,
    pub source_text: String,
    pub target_text: String,
    pub pair: LangPair,
    pub latency_ms: u64,
}

enum Route {
    Baseline(Arc<Lexicon>),
    External {
        client: reqwest::Client,
        endpoint: String,
        timeout: Duration,
    },
}

struct Registered {
    pair: LangPair,
    route: Route,
}

type PairTable = HashMap<(String, String), Arc<Registered>>;

#[derive(Serialize)]
struct TranslateRequest<'a> {
    text: &'a str,
    source: &'a str,
    target: &'a str,
}

#[derive(Deserialize)]
struct TranslateResponse {
    text: String,
}

/// Language-pair registry. Lookups work on a shared snapshot; registration
/// swaps in a new table.
#[derive(Default)]
pub struct Translator {
    pairs: RwLock<Arc<PairTable>>,
}

impl Translator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry with the bundled English to French baseline.
    pub fn with_bundled() -> Self {
        let t = Self::new();
        let lexicon = Lexicon::parse(BUNDLED_EN_FR).expect("bundled lexicon parses");
        t.register_language_pair(LangPair::new("en", "fr", PairBackend::Baseline), Some(lexicon))
            .expect("bundled pair registers");
        t
    }

    pub fn register_language_pair(&self, pair: LangPair, lexicon: Option<Lexicon>) -> Result<(), TranslateError> {
        self.register(pair, lexicon, None, Duration::from_millis(1500))
    }

    /// Registers a pair served by a remote model at `endpoint`.
    pub fn register_external(&self, pair: LangPair, endpoint: &str, timeout: Duration) -> Result<(), TranslateError> {
        let pair = LangPair {
            backend: PairBackend::External,
            ..pair
        };
        self.register(pair, None, Some(endpoint.to_owned()), timeout)
    }

    fn register(
        &self,
        pair: LangPair,
        lexicon: Option<Lexicon>,
        endpoint: Option<String>,
        timeout: Duration,
    ) -> Result<(), TranslateError> {
        if pair.source == pair.target || !is_language_code(&pair.source) || !is_language_code(&pair.target) {
            return Err(TranslateError::InvalidPair(pair.to_string()));
        }
        let route = match pair.backend {
            PairBackend::Baseline => Route::Baseline(Arc::new(
                lexicon.ok_or_else(|| TranslateError::MissingLexicon(pair.to_string()))?,
            )),
            PairBackend::External => Route::External {
                client: http::client(timeout),
                endpoint: endpoint.unwrap_or_default(),
                timeout,
            },
        };
        let mut guard = self.pairs.write();
        let mut table = PairTable::clone(&guard);
        table.insert(pair.key(), Arc::new(Registered { pair, route }));
        *guard = Arc::new(table);
        Ok(())
    }

    pub fn is_registered(&self, source: &str, target: &str) -> bool {
        self.pairs
            .read()
            .contains_key(&(source.to_ascii_lowercase(), target.to_ascii_lowercase()))
    }

    pub fn pairs(&self) -> Vec<LangPair> {
        let mut pairs: Vec<LangPair> = self.pairs.read().values().map(|r| r.pair.clone()).collect();
        pairs.sort_by_key(|p| p.to_string());
        pairs
    }

    fn lookup(&self, source: &str, target: &str) -> Result<Arc<Registered>, TranslateError> {
        let snapshot = Arc::clone(&self.pairs.read());
        snapshot
            .get(&(source.to_ascii_lowercase(), target.to_ascii_lowercase()))
            .cloned()
            .ok_or_else(|| TranslateError::PairNotRegistered(format!("{source}->{target}")))
    }

    /// Translates free text between two registered languages.
    pub async fn translate_text(&self, text: &str, source: &str, target: &str) -> Result<String, TranslateError> {
        let entry = self.lookup(source, target)?;
        match &entry.route {
            Route::Baseline(lexicon) => Ok(lexicon.translate_text(text)),
            Route::External {
                client,
                endpoint,
                timeout,
            } => {
                let request = TranslateRequest {
                    text,
                    source: &entry.pair.source,
                    target: &entry.pair.target,
                };
                let reply: TranslateResponse = http::post_json(client, endpoint, "/translate", *timeout, &request).await?;
                Ok(reply.text)
            }
        }
    }

    /// Translates an utterance from its own language into `target`.
    pub async fn translate(&self, utterance: &Utterance, target: &str) -> Result<Translation, TranslateError> {
        let started = Instant::now();
        let entry = self.lookup(&utterance.language, target)?;
        let target_text = self.translate_text(&utterance.text, &utterance.language, target).await?;
        Ok(Translation {
            utterance_id: utterance.utterance_id.clone(),
            source_text: utterance.text.clone(),
            target_text,
            pair: entry.pair.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn utterance(text: &str) -> Utterance {
        Utterance {
            utterance_id: "u1".into(),
            speaker_id: "s".into(),
            seq: 0,
            text: text.into(),
            tokens: text::tokenize(text),
            t0: 0.0,
            t1: 1.0,
            language: "en".into(),
        }
    }

    fn registry(lexicon: Lexicon) -> Translator {
        let t = Translator::new();
        t.register_language_pair(LangPair::new("en", "fr", PairBackend::Baseline), Some(lexicon))
            .unwrap();
        t
    }

    /// Token-by-token oracle written independently of `translate_token`.
    fn oracle(lexicon: &[(&str, &str)], text: &str) -> String {
        let mut out = Vec::new();
        for tok in text.split(' ') {
            let word: String = tok.chars().filter(|c| c.is_alphanumeric()).collect();
            let tail: String = tok.chars().skip(word.chars().count()).collect();
            match lexicon.iter().find(|(s, _)| s.eq_ignore_ascii_case(&word)) {
                Some((_, t)) if word.chars().next().unwrap().is_uppercase() => {
                    let mut c = t.chars();
                    let first = c.next().unwrap().to_uppercase().collect::<String>();
                    out.push(format!("{first}{}{tail}", c.as_str()));
                }
                Some((_, t)) => out.push(format!("{t}{tail}")),
                None => out.push(tok.to_owned()),
            }
        }
        out.join(" ")
    }

    #[tokio::test]
    async fn hello_team() {
        let pairs = [("hello", "bonjour"), ("team", "équipe")];
        let t = registry(Lexicon::from_pairs(pairs));
        let tr = t.translate(&utterance("Hello team."), "fr").await.unwrap();
        assert_eq!(tr.target_text, "Bonjour équipe.");
        assert_eq!(tr.target_text, oracle(&pairs, "Hello team."));
        assert_eq!(tr.source_text, "Hello team.");
    }

    #[tokio::test]
    async fn unknown_words_pass_through() {
        let t = registry(Lexicon::from_pairs([("hello", "bonjour")]));
        let tr = t.translate(&utterance("Zyzzyva rocks."), "fr").await.unwrap();
        assert_eq!(tr.target_text, "Zyzzyva rocks.");
    }

    #[tokio::test]
    async fn unregistered_target() {
        let t = Translator::with_bundled();
        let err = t.translate(&utterance("Hello."), "xx").await.unwrap_err();
        assert_eq!(err.code(), "PAIR_NOT_REGISTERED");
    }

    #[test]
    fn registration_rules() {
        let t = Translator::with_bundled();
        assert!(t.is_registered("en", "fr"));
        t.register_external(
            LangPair::new("en", "de", PairBackend::External),
            "http://127.0.0.1:1",
            Duration::from_millis(100),
        )
        .unwrap();
        assert!(t.is_registered("en", "de"));
        let err = t.register_language_pair(LangPair::new("en", "en", PairBackend::Baseline), Some(Lexicon::default()));
        assert_eq!(err.unwrap_err().code(), "INVALID_PAIR");
        let err = t.register_language_pair(LangPair::new("en", "es", PairBackend::Baseline), None);
        assert_eq!(err.unwrap_err().code(), "MISSING_LEXICON");
    }

    #[test]
    fn lexicon_format() {
        let lex = Lexicon::parse("# comment\nhello\tbonjour\n\nteam\téquipe\n").unwrap();
        assert_eq!(lex.len(), 2);
        assert_eq!(lex.get("HELLO"), Some("bonjour"));
        match Lexicon::parse("hello bonjour\n").unwrap_err() {
            TranslateError::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
        assert!(Lexicon::parse(BUNDLED_EN_FR).unwrap().len() >= 150);
    }

    proptest! {
        #[test]
        fn token_count_preserved_and_idempotent(words in prop::collection::vec("[a-z]{1,6}[.,?]?", 0..20)) {
            // sources and targets are disjoint, so a second pass changes nothing
            let lex = Lexicon::from_pairs([("ab", "xq1"), ("cd", "xq2"), ("e", "xq3")]);
            let text = words.join(" ");
            let once = lex.translate_text(&text);
            prop_assert_eq!(once.split_whitespace().count(), text.split_whitespace().count());
            prop_assert_eq!(lex.translate_text(&once), once);
        }
    }
}
