//! Core of the accessibility mediation pipeline.
//!
//! Speech arrives as overlapping audio chunks, is recognised and merged into
//! utterances, and every finalised utterance fans out to translation, emotion
//! tagging, sign-language animation and meeting summaries. Neural models sit
//! behind backend traits; each stage ships a deterministic in-process baseline
//! so the whole pipeline can be exercised offline.
//!
//! Modules map onto pipeline stages:
//!
//! - [`pipeline`]: sessions, participants, event routing and the latency ledger
//! - [`backpressure`]: bounded stage queues with reject / drop-oldest policies
//! - [`chunker`]: overlapping audio chunking and transcript overlap merging
//! - [`recognizer`]: speech recognition backends
//! - [`translator`]: language-pair registry and dictionary baseline
//! - [`emotion`]: six-class lexicon emotion classifier
//! - [`signgen`]: text to gloss to 30 fps skeletal animation
//! - [`landmark`]: landmark ingestion and the binary sign dictionary
//! - [`summarizer`]: windowed extractive meeting minutes

pub mod backend;
pub mod backpressure;
pub mod chunker;
pub mod emotion;
pub mod exec;
pub mod ids;
pub mod landmark;
pub mod pipeline;
pub mod recognizer;
pub mod signgen;
pub mod stats;
pub mod summarizer;
pub mod text;
pub mod translator;

pub use backend::BackendError;
pub use exec::Execution;
