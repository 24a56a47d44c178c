//! Overlapping audio chunking and transcript reassembly.
//!
//! Audio is cut into fixed-length chunks that overlap their predecessor, each
//! chunk is recognised independently, and the overlapping hypotheses are
//! reconciled in token space. Reconciliation emits the shared token run once
//! and repairs a word that was cut off at the end of the earlier chunk.
//! Reassembled tokens are grouped into utterances on silence or length.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids;
use crate::text;

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Small tolerance for comparisons of chunk times derived from sample counts.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ChunkError {
    #[error("invalid chunk parameters: {0}")]
    InvalidParams(String),
}

impl ChunkError {
    pub fn code(&self) -> &'static str {
        "INVALID_PARAMS"
    }
}

/// Chunking and utterance assembly settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkParams {
    pub chunk_len_ms: u32,
    pub overlap_ms: u32,
    pub silence_gap_ms: u32,
    pub max_utterance_tokens: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        Self {
            chunk_len_ms: 1000,
            overlap_ms: 500,
            silence_gap_ms: 1500,
            max_utterance_tokens: 60,
        }
    }
}

impl ChunkParams {
    pub fn validate(&self) -> Result<(), ChunkError> {
        if self.chunk_len_ms == 0 {
            return Err(ChunkError::InvalidParams("chunk_len_ms must be > 0".into()));
        }
        if self.overlap_ms >= self.chunk_len_ms {
            return Err(ChunkError::InvalidParams(format!(
                "overlap_ms ({}) must be smaller than chunk_len_ms ({})",
                self.overlap_ms, self.chunk_len_ms
            )));
        }
        if self.max_utterance_tokens == 0 {
            return Err(ChunkError::InvalidParams("max_utterance_tokens must be > 0".into()));
        }
        Ok(())
    }

    pub fn stride_ms(&self) -> u32 {
        self.chunk_len_ms - self.overlap_ms
    }

    pub fn stride_s(&self) -> f64 {
        self.stride_ms() as f64 / 1000.0
    }

    pub fn chunk_len_s(&self) -> f64 {
        self.chunk_len_ms as f64 / 1000.0
    }

    pub fn silence_gap_s(&self) -> f64 {
        self.silence_gap_ms as f64 / 1000.0
    }

    /// Chunk length and stride in samples at `sample_rate`.
    fn sample_geometry(&self, sample_rate: u32) -> Result<(usize, usize), ChunkError> {
        self.validate()?;
        if sample_rate == 0 {
            return Err(ChunkError::InvalidParams("sample_rate must be > 0".into()));
        }
        let len = ms_to_samples(self.chunk_len_ms, sample_rate);
        let overlap = ms_to_samples(self.overlap_ms, sample_rate);
        if len == 0 || overlap >= len {
            return Err(ChunkError::InvalidParams(format!(
                "chunk geometry degenerate at {sample_rate} Hz"
            )));
        }
        Ok((len, len - overlap))
    }
}

fn ms_to_samples(ms: u32, sample_rate: u32) -> usize {
    ((ms as u64 * sample_rate as u64 + 500) / 1000) as usize
}

/// One overlapping slice of a speaker's audio stream.
///
/// `samples` always holds a full chunk (`duration * sample_rate` samples);
/// a trailing chunk is zero-padded and `content_duration` records how much of
/// it is real audio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioChunk {
    pub session_id: String,
    pub speaker_id: String,
    pub seq: u64,
    pub start_time: f64,
    pub duration: f64,
    pub content_duration: f64,
    pub sample_rate: u32,
    pub samples: Vec<i16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_text: Option<String>,
}

impl AudioChunk {
    /// End of the real (unpadded) audio in this chunk.
    pub fn end_time(&self) -> f64 {
        self.start_time + self.content_duration
    }

    /// Expected sample count for the padded chunk.
    pub fn expected_samples(&self) -> usize {
        (self.duration * self.sample_rate as f64).round() as usize
    }
}

/// Incremental chunker for one speaker's PCM stream.
pub struct Chunker {
    session_id: String,
    speaker_id: String,
    sample_rate: u32,
    len: usize,
    stride: usize,
    /// Samples from the start of the next chunk onward.
    buffer: Vec<i16>,
    buffer_start: usize,
    total: usize,
    covered_until: usize,
    next_seq: u64,
}

impl Chunker {
    pub fn new(
        params: ChunkParams,
        sample_rate: u32,
        session_id: impl Into<String>,
        speaker_id: impl Into<String>,
    ) -> Result<Self, ChunkError> {
        let (len, stride) = params.sample_geometry(sample_rate)?;
        Ok(Self {
            session_id: session_id.into(),
            speaker_id: speaker_id.into(),
            sample_rate,
            len,
            stride,
            buffer: Vec::with_capacity(len * 2),
            buffer_start: 0,
            total: 0,
            covered_until: 0,
            next_seq: 0,
        })
    }

    /// Appends samples and returns every chunk that became complete.
    pub fn push(&mut self, samples: &[i16]) -> Vec<AudioChunk> {
        self.buffer.extend_from_slice(samples);
        self.total += samples.len();
        let mut out = Vec::new();
        while self.buffer.len() >= self.len {
            let chunk = self.make_chunk(self.len);
            out.push(chunk);
            self.buffer.drain(..self.stride);
            self.buffer_start += self.stride;
        }
        out
    }

    /// Flushes the trailing partial chunk, if any audio is not yet covered.
    pub fn finish(mut self) -> Option<AudioChunk> {
        if self.total > self.covered_until {
            let content = self.buffer.len();
            Some(self.make_chunk(content))
        } else {
            None
        }
    }

    fn make_chunk(&mut self, content: usize) -> AudioChunk {
        let mut samples = self.buffer[..content].to_vec();
        samples.resize(self.len, 0);
        let sr = self.sample_rate as f64;
        let seq = self.next_seq;
        self.next_seq += 1;
        self.covered_until = self.buffer_start + content;
        AudioChunk {
            session_id: self.session_id.clone(),
            speaker_id: self.speaker_id.clone(),
            seq,
            start_time: self.buffer_start as f64 / sr,
            duration: self.len as f64 / sr,
            content_duration: content as f64 / sr,
            sample_rate: self.sample_rate,
            samples,
            oracle_text: None,
        }
    }
}

/// Cuts a complete PCM buffer into overlapping chunks.
///
/// Chunk `k` starts at `k * (chunk_len - overlap)`; chunks are emitted until
/// one reaches the end of the input.
pub fn chunk_stream(
    samples: &[i16],
    sample_rate: u32,
    params: ChunkParams,
    session_id: &str,
    speaker_id: &str,
) -> Result<Vec<AudioChunk>, ChunkError> {
    let mut chunker = Chunker::new(params, sample_rate, session_id, speaker_id)?;
    let mut chunks = chunker.push(samples);
    chunks.extend(chunker.finish());
    Ok(chunks)
}

/// Recognition output for one chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptSegment {
    pub chunk_seq: u64,
    pub speaker_id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub t0: f64,
    pub t1: f64,
    #[serde(rename = "final")]
    pub is_final: bool,
    pub confidence: f32,
}

impl TranscriptSegment {
    /// Segment spanning `chunk`, with tokens taken from `text`.
    pub fn for_chunk(chunk: &AudioChunk, text: impl Into<String>, confidence: f32) -> Self {
        let text = text.into();
        Self {
            chunk_seq: chunk.seq,
            speaker_id: chunk.speaker_id.clone(),
            tokens: text::tokenize(&text),
            text,
            t0: chunk.start_time,
            t1: chunk.end_time(),
            is_final: false,
            confidence: confidence.clamp(0.0, 1.0),
        }
    }

    pub fn is_silent(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// A finalised, punctuated span of one speaker's speech.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub utterance_id: String,
    pub speaker_id: String,
    /// Per-speaker utterance counter, strictly increasing.
    pub seq: u64,
    pub text: String,
    pub tokens: Vec<String>,
    pub t0: f64,
    pub t1: f64,
    pub language: String,
}

/// How two consecutive token hypotheses are stitched together: keep all but
/// `drop_prev` trailing tokens of the earlier one, then append the later one
/// from index `skip_next`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergePlan {
    pub drop_prev: usize,
    pub skip_next: usize,
}

impl MergePlan {
    pub const CONCAT: MergePlan = MergePlan {
        drop_prev: 0,
        skip_next: 0,
    };

    pub fn apply(&self, prev: &[String], next: &[String]) -> Vec<String> {
        let keep = prev.len().saturating_sub(self.drop_prev);
        let skip = self.skip_next.min(next.len());
        prev[..keep].iter().chain(&next[skip..]).cloned().collect()
    }
}

fn same_word(a: &str, b: &str) -> bool {
    let (na, nb) = (text::normalize_word(a), text::normalize_word(b));
    if na.is_empty() || nb.is_empty() {
        return a.to_lowercase() == b.to_lowercase();
    }
    na == nb
}

fn is_fragment_of(fragment: &str, word: &str) -> bool {
    let (f, w) = (text::normalize_word(fragment), text::normalize_word(word));
    !f.is_empty() && f.len() < w.len() && w.starts_with(&f)
}

fn runs_match(prev: &[String], next: &[String]) -> bool {
    prev.len() == next.len() && prev.iter().zip(next).all(|(a, b)| same_word(a, b))
}

/// Every stitch consistent with the two hypotheses, most overlap first.
///
/// A run that is both a suffix of `prev` and a prefix of `next` is kept once.
/// A trailing `prev` token that is a strict prefix of the token following
/// such a run in `next` is a cut-off word, replaced by the complete one.
fn merge_candidates(prev: &[String], next: &[String]) -> Vec<MergePlan> {
    let n = prev.len();
    let m = next.len();
    let mut out: Vec<MergePlan> = (1..=n.min(m))
        .rev()
        .filter(|&run| runs_match(&prev[n - run..], &next[..run]))
        .map(|run| MergePlan {
            drop_prev: 0,
            skip_next: run,
        })
        .collect();
    if n >= 1 && m >= 1 {
        let fragment = &prev[n - 1];
        for run in (0..=(n - 1).min(m.saturating_sub(1))).rev() {
            if is_fragment_of(fragment, &next[run]) && runs_match(&prev[n - 1 - run..n - 1], &next[..run]) {
                out.push(MergePlan {
                    drop_prev: 1,
                    skip_next: run,
                });
            }
        }
    }
    out
}

/// Plans the stitch of two consecutive hypotheses from their text alone,
/// taking the longest shared run, then the longest cut-off word repair, and
/// otherwise concatenating.
pub fn merge_plan(prev: &[String], next: &[String]) -> MergePlan {
    merge_candidates(prev, next).first().copied().unwrap_or(MergePlan::CONCAT)
}

/// True when more than one stitch fits, as happens when a word repeats
/// across the boundary or a short cut-off matches several words. Text alone
/// cannot tell which is right; [`merge_plan`] takes the longest.
pub fn merge_is_ambiguous(prev: &[String], next: &[String]) -> bool {
    merge_candidates(prev, next).len() > 1
}

/// Token list produced by stitching two consecutive segments.
pub fn merge_overlaps(prev: &TranscriptSegment, next: &TranscriptSegment) -> Vec<String> {
    let plan = if next.chunk_seq == prev.chunk_seq + 1 {
        merge_plan(&prev.tokens, &next.tokens)
    } else {
        MergePlan::CONCAT
    };
    plan.apply(&prev.tokens, &next.tokens)
}

/// Minimal punctuation restoration: capitalise the first token and terminate
/// with a period unless terminal punctuation is already present.
pub fn punctuate(tokens: &[String]) -> String {
    let joined = tokens.join(" ");
    let mut text = text::capitalize_first(&joined);
    if !text.is_empty() && !text::ends_with_terminal(&text) {
        text.push('.');
    }
    text
}

/// Streaming reassembly of one speaker's segments into utterances.
#[derive(Debug, Clone)]
pub struct UtteranceAssembler {
    params: ChunkParams,
    speaker_id: String,
    language: String,
    tokens: Vec<String>,
    prev: Option<(u64, Vec<String>)>,
    utterance_t0: Option<f64>,
    last_voiced_t1: Option<f64>,
    next_seq: u64,
}

impl UtteranceAssembler {
    pub fn new(params: ChunkParams, speaker_id: impl Into<String>, language: impl Into<String>) -> Self {
        Self {
            params,
            speaker_id: speaker_id.into(),
            language: language.into(),
            tokens: Vec::new(),
            prev: None,
            utterance_t0: None,
            last_voiced_t1: None,
            next_seq: 0,
        }
    }

    pub fn pending_tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Consumes the next segment (in chunk order) and returns any utterances
    /// it finalised.
    pub fn push(&mut self, segment: &TranscriptSegment) -> Vec<Utterance> {
        let gap = self.params.silence_gap_s();
        let mut out = Vec::new();

        if segment.is_silent() {
            if let Some(last) = self.last_voiced_t1 {
                if !self.tokens.is_empty() && segment.t1 - last >= gap - TIME_EPS {
                    out.extend(self.finalize());
                }
            }
            self.prev = Some((segment.chunk_seq, Vec::new()));
            return out;
        }

        if let Some(last) = self.last_voiced_t1 {
            if !self.tokens.is_empty() && segment.t0 - last >= gap - TIME_EPS {
                out.extend(self.finalize());
            }
        }

        let plan = match &self.prev {
            Some((seq, prev)) if seq + 1 == segment.chunk_seq => merge_plan(prev, &segment.tokens),
            _ => MergePlan::CONCAT,
        };
        let keep = self.tokens.len().saturating_sub(plan.drop_prev);
        self.tokens.truncate(keep);
        let fresh = &segment.tokens[plan.skip_next.min(segment.tokens.len())..];
        if !fresh.is_empty() && self.utterance_t0.is_none() {
            self.utterance_t0 = Some(segment.t0);
        }
        self.tokens.extend(fresh.iter().cloned());
        self.last_voiced_t1 = Some(segment.t1);
        self.prev = Some((segment.chunk_seq, segment.tokens.clone()));

        if self.tokens.len() >= self.params.max_utterance_tokens {
            out.extend(self.finalize());
        }
        out
    }

    /// Finalises whatever is pending (end of stream or speaker leaving).
    pub fn flush(&mut self) -> Option<Utterance> {
        self.finalize()
    }

    /// Builds an utterance directly from typed text, bypassing recognition.
    pub fn from_text(&mut self, text: &str, at: f64) -> Option<Utterance> {
        let tokens = text::tokenize(text);
        if tokens.is_empty() {
            return None;
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        Some(Utterance {
            utterance_id: ids::new_id(),
            speaker_id: self.speaker_id.clone(),
            seq,
            text: punctuate(&tokens),
            tokens,
            t0: at,
            t1: at + 1e-3,
            language: self.language.clone(),
        })
    }

    fn finalize(&mut self) -> Option<Utterance> {
        let t0 = self.utterance_t0.take();
        if self.tokens.is_empty() {
            return None;
        }
        let tokens = std::mem::take(&mut self.tokens);
        let t1 = self.last_voiced_t1.unwrap_or(0.0);
        let t0 = t0.unwrap_or(t1);
        let seq = self.next_seq;
        self.next_seq += 1;
        Some(Utterance {
            utterance_id: ids::new_id(),
            speaker_id: self.speaker_id.clone(),
            seq,
            text: punctuate(&tokens),
            tokens,
            t0,
            t1: if t1 > t0 { t1 } else { t0 + 1e-3 },
            language: self.language.clone(),
        })
    }
}

/// Batch form of [`UtteranceAssembler`]: assembles a complete, time-ordered
/// segment list and flushes at the end.
pub fn assemble_utterances(
    segments: &[TranscriptSegment],
    params: ChunkParams,
    speaker_id: &str,
    language: &str,
) -> Vec<Utterance> {
    let mut assembler = UtteranceAssembler::new(params, speaker_id, language);
    let mut out: Vec<Utterance> = segments.iter().flat_map(|s| assembler.push(s)).collect();
    out.extend(assembler.flush());
    out
}

pub mod script {
    //! Scripted speech timelines for deterministic end-to-end runs.
    //!
    //! Words are laid out on a fixed pitch, then every chunk window is given
    //! the oracle text a recogniser would hear in it: whole words inside the
    //! window, plus a cut-off prefix of a word running past the window end.
    //! Words whose onset precedes the window are not heard.

    use super::{punctuate, AudioChunk, ChunkParams};
    use crate::text;

    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct ScriptTiming {
        /// Onset-to-onset spacing between words, seconds.
        pub word_pitch_s: f64,
        /// Spoken length of a word, seconds; at most the chunk stride.
        pub word_len_s: f64,
        /// Silence after every utterance; `None` uses silence gap + chunk length.
        pub trailing_silence_s: Option<f64>,
        pub fragments: bool,
    }

    impl Default for ScriptTiming {
        fn default() -> Self {
            Self {
                word_pitch_s: 0.4,
                word_len_s: 0.3,
                trailing_silence_s: None,
                fragments: true,
            }
        }
    }

    /// A chunk of scripted speech, without PCM attached.
    #[derive(Debug, Clone, PartialEq)]
    pub struct PlannedChunk {
        pub seq: u64,
        pub start_time: f64,
        pub duration: f64,
        pub content_duration: f64,
        pub oracle_text: Option<String>,
        /// Index of the utterance whose final word is last heard in this chunk.
        pub completes_speech_of: Option<usize>,
    }

    impl PlannedChunk {
        /// Materialises the chunk with silent (zero) PCM.
        pub fn to_audio_chunk(&self, session_id: &str, speaker_id: &str, sample_rate: u32) -> AudioChunk {
            let samples = (self.duration * sample_rate as f64).round() as usize;
            AudioChunk {
                session_id: session_id.to_owned(),
                speaker_id: speaker_id.to_owned(),
                seq: self.seq,
                start_time: self.start_time,
                duration: self.duration,
                content_duration: self.content_duration,
                sample_rate,
                samples: vec![0; samples],
                oracle_text: self.oracle_text.clone(),
            }
        }
    }

    #[derive(Debug, Clone, PartialEq)]
    pub struct SpeechPlan {
        pub chunks: Vec<PlannedChunk>,
        /// Utterance text the pipeline is expected to produce, in order.
        pub expected: Vec<String>,
        pub total_s: f64,
    }

    struct Word {
        text: String,
        start: f64,
        end: f64,
        utterance: usize,
    }

    /// Lays out `utterances` on one continuous timeline and plans its chunks.
    pub fn plan_speech(utterances: &[String], timing: ScriptTiming, params: ChunkParams) -> SpeechPlan {
        let stride = params.stride_s();
        let chunk_len = params.chunk_len_s();
        let trailing = timing.trailing_silence_s.unwrap_or(params.silence_gap_s() + chunk_len);

        let mut words = Vec::new();
        let mut expected = Vec::new();
        let mut cursor = 0.0f64;
        for (u, line) in utterances.iter().enumerate() {
            let tokens = text::tokenize(line);
            if tokens.is_empty() {
                continue;
            }
            let mut end = cursor;
            for (i, tok) in tokens.iter().enumerate() {
                let start = cursor + i as f64 * timing.word_pitch_s;
                end = start + timing.word_len_s;
                words.push(Word {
                    text: tok.clone(),
                    start,
                    end,
                    utterance: u,
                });
            }
            expected.push(punctuate(&tokens));
            // next utterance starts on a stride boundary after the silence
            cursor = ((end + trailing) / stride - 1e-9).ceil() * stride;
        }
        let total = cursor;
        if words.is_empty() || total <= 0.0 {
            return SpeechPlan {
                chunks: Vec::new(),
                expected,
                total_s: 0.0,
            };
        }

        let mut chunks = Vec::new();
        let mut seq = 0u64;
        loop {
            let start = seq as f64 * stride;
            let end = (start + chunk_len).min(total);
            let mut heard: Vec<String> = Vec::new();
            let mut last_word_index = None;
            for (idx, w) in words.iter().enumerate() {
                if w.start < start - 1e-9 || w.start >= start + chunk_len - 1e-9 {
                    continue;
                }
                if w.end <= start + chunk_len + 1e-9 {
                    heard.push(w.text.clone());
                    last_word_index = Some(idx);
                } else if timing.fragments {
                    let chars: Vec<char> = w.text.chars().collect();
                    let alnum = chars.iter().filter(|c| c.is_alphanumeric()).count();
                    let frac = (start + chunk_len - w.start) / (w.end - w.start);
                    let keep = ((chars.len() as f64 * frac).floor() as usize).max(1);
                    if alnum > 1 && keep < chars.len() {
                        let fragment: String = chars[..keep].iter().collect();
                        if !text::normalize_word(&fragment).is_empty() {
                            heard.push(fragment);
                        }
                    }
                }
            }
            let completes = last_word_index.and_then(|i| {
                let u = words[i].utterance;
                let is_last = words.get(i + 1).is_none_or(|next| next.utterance != u);
                // the chunk that last hears the final word completes the speech
                let later_hears = words[i].start >= start + stride - 1e-9;
                (is_last && !later_hears).then_some(u)
            });
            chunks.push(PlannedChunk {
                seq,
                start_time: start,
                duration: chunk_len,
                content_duration: end - start,
                oracle_text: (!heard.is_empty()).then(|| heard.join(" ")),
                completes_speech_of: completes,
            });
            if start + chunk_len >= total - 1e-9 {
                break;
            }
            seq += 1;
        }
        // remap utterance indices onto positions in `expected`
        let spoken: Vec<usize> = utterances
            .iter()
            .enumerate()
            .filter(|(_, l)| !text::tokenize(l).is_empty())
            .map(|(i, _)| i)
            .collect();
        for c in &mut chunks {
            c.completes_speech_of = c.completes_speech_of.and_then(|u| spoken.iter().position(|&s| s == u));
        }
        SpeechPlan {
            chunks,
            expected,
            total_s: total,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        text::tokenize(s)
    }

    fn seg(seq: u64, text: &str, t0: f64, t1: f64) -> TranscriptSegment {
        TranscriptSegment {
            chunk_seq: seq,
            speaker_id: "s".into(),
            text: text.into(),
            tokens: toks(text),
            t0,
            t1,
            is_final: false,
            confidence: 1.0,
        }
    }

    /// Brute force: every suffix/prefix run length, longest agreeing wins.
    fn oracle_merge(prev: &[String], next: &[String]) -> Vec<String> {
        let mut best = 0;
        for run in 1..=prev.len().min(next.len()) {
            let a: Vec<String> = prev[prev.len() - run..].iter().map(|t| t.to_lowercase()).collect();
            let b: Vec<String> = next[..run].iter().map(|t| t.to_lowercase()).collect();
            if a == b {
                best = run;
            }
        }
        prev.iter().chain(&next[best..]).cloned().collect()
    }

    #[test]
    fn chunk_starts_for_three_seconds() {
        let pcm = vec![0i16; 48_000];
        let chunks = chunk_stream(&pcm, 16_000, ChunkParams::default(), "s", "a").unwrap();
        let starts: Vec<f64> = chunks.iter().map(|c| c.start_time).collect();
        // oracle: starts at k * stride until a chunk reaches the end
        let stride = 0.5;
        let mut expected = Vec::new();
        let mut k = 0;
        loop {
            let s = k as f64 * stride;
            expected.push(s);
            if s + 1.0 >= 3.0 {
                break;
            }
            k += 1;
        }
        assert_eq!(expected, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(starts, expected);
        assert!(chunks.iter().all(|c| c.samples.len() == 16_000));
    }

    #[test]
    fn one_second_is_a_single_chunk() {
        let pcm = vec![1i16; 16_000];
        let chunks = chunk_stream(&pcm, 16_000, ChunkParams::default(), "s", "a").unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].start_time, 0.0);
    }

    #[test]
    fn trailing_partial_is_padded() {
        let pcm = vec![7i16; 16_000 + 4_000];
        let chunks = chunk_stream(&pcm, 16_000, ChunkParams::default(), "s", "a").unwrap();
        assert_eq!(chunks.len(), 2);
        let last = &chunks[1];
        assert_eq!(last.start_time, 0.5);
        assert!((last.content_duration - 0.75).abs() < 1e-12);
        assert_eq!(last.samples.len(), 16_000);
        assert_eq!(last.samples[11_999], 7);
        assert_eq!(last.samples[12_000], 0);
    }

    #[test]
    fn overlap_equal_to_length_is_rejected() {
        let params = ChunkParams {
            overlap_ms: 1000,
            ..Default::default()
        };
        let err = chunk_stream(&[0; 100], 16_000, params, "s", "a").unwrap_err();
        assert_eq!(err.code(), "INVALID_PARAMS");
    }

    #[test]
    fn merge_examples() {
        assert_eq!(
            merge_overlaps(&seg(0, "the quick brown", 0.0, 1.0), &seg(1, "brown fox", 0.5, 1.5)),
            toks("the quick brown fox")
        );
        assert_eq!(
            merge_overlaps(&seg(0, "hello", 0.0, 1.0), &seg(1, "world", 0.5, 1.5)),
            toks("hello world")
        );
        assert_eq!(
            merge_overlaps(&seg(0, "budget revi", 0.0, 1.0), &seg(1, "review complete", 0.5, 1.5)),
            toks("budget review complete")
        );
    }

    #[test]
    fn merge_is_case_insensitive() {
        assert_eq!(merge_plan(&toks("the Brown"), &toks("brown fox")).skip_next, 1);
    }

    #[test]
    fn fragment_after_shared_run() {
        let plan = merge_plan(&toks("we agreed rev"), &toks("agreed review it"));
        assert_eq!(
            plan,
            MergePlan {
                drop_prev: 1,
                skip_next: 1
            }
        );
        assert_eq!(
            plan.apply(&toks("we agreed rev"), &toks("agreed review it")),
            toks("we agreed review it")
        );
    }

    #[test]
    fn repeated_words_leave_the_stitch_ambiguous() {
        // "morni" may be the second "morning" or the third; the longest reading wins
        let (prev, next) = (toks("update morning morni"), toks("morning morning"));
        assert!(merge_is_ambiguous(&prev, &next));
        assert_eq!(merge_plan(&prev, &next).apply(&prev, &next), toks("update morning morning"));
        assert!(!merge_is_ambiguous(&toks("we agreed rev"), &toks("agreed review it")));
    }

    #[test]
    fn non_consecutive_segments_concatenate() {
        assert_eq!(
            merge_overlaps(&seg(0, "a b", 0.0, 1.0), &seg(2, "b c", 1.0, 2.0)),
            toks("a b b c")
        );
    }

    #[test]
    fn utterance_after_silence_gap() {
        let params = ChunkParams::default();
        let segs = vec![
            seg(0, "good morning", 0.0, 1.0),
            seg(1, "morning everyone", 0.5, 1.5),
            seg(2, "", 1.0, 2.0),
            seg(3, "", 1.5, 2.5),
            seg(4, "", 2.0, 3.0),
            seg(5, "", 2.5, 3.5),
        ];
        let mut asm = UtteranceAssembler::new(params, "s", "en");
        let mut out = Vec::new();
        for s in &segs {
            out.extend(asm.push(s));
        }
        // silence measured from the last voiced segment end (1.5 s); 3.0 - 1.5 >= 1.5
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].text, "Good morning everyone.");
        assert_eq!((out[0].t0, out[0].t1), (0.0, 1.5));
        assert!(asm.flush().is_none());
    }

    #[test]
    fn no_tokens_no_utterance() {
        assert!(assemble_utterances(&[], ChunkParams::default(), "s", "en").is_empty());
        let silent = vec![seg(0, "", 0.0, 1.0), seg(1, "", 0.5, 1.5)];
        assert!(assemble_utterances(&silent, ChunkParams::default(), "s", "en").is_empty());
    }

    #[test]
    fn terminal_punctuation_kept() {
        let out = assemble_utterances(&[seg(0, "are we ready?", 0.0, 1.0)], ChunkParams::default(), "s", "en");
        assert_eq!(out[0].text, "Are we ready?");
    }

    #[test]
    fn length_cap_finalises() {
        let params = ChunkParams {
            max_utterance_tokens: 4,
            ..Default::default()
        };
        let mut asm = UtteranceAssembler::new(params, "s", "en");
        assert!(asm.push(&seg(0, "one two three", 0.0, 1.0)).is_empty());
        let out = asm.push(&seg(1, "three four five", 0.5, 1.5));
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].text, "One two three four five.");
        // overlap with an already finalised utterance is not repeated
        assert!(asm.push(&seg(2, "five six", 1.0, 2.0)).is_empty());
        assert_eq!(asm.flush().unwrap().text, "Six.");
    }

    #[test]
    fn utterance_seq_increases() {
        let mut asm = UtteranceAssembler::new(ChunkParams::default(), "s", "en");
        let a = asm.from_text("hello", 0.0).unwrap();
        let b = asm.from_text("again", 1.0).unwrap();
        assert!(b.seq > a.seq);
        assert!(asm.from_text("   ", 2.0).is_none());
    }

    #[test]
    fn scripted_plan_reassembles() {
        let lines = vec![
            "good morning everyone".to_string(),
            "we agreed to review the budget".to_string(),
        ];
        let params = ChunkParams::default();
        let plan = script::plan_speech(&lines, script::ScriptTiming::default(), params);
        let segs: Vec<TranscriptSegment> = plan
            .chunks
            .iter()
            .map(|c| {
                let chunk = c.to_audio_chunk("s", "a", 16_000);
                TranscriptSegment::for_chunk(&chunk, c.oracle_text.clone().unwrap_or_default(), 1.0)
            })
            .collect();
        let mut asm = UtteranceAssembler::new(params, "a", "en");
        let mut got = Vec::new();
        for s in &segs {
            got.extend(asm.push(s).into_iter().map(|u| u.text));
        }
        // every utterance finalises from silence alone, before any flush
        assert_eq!(got, plan.expected);
        assert_eq!(got[0], "Good morning everyone.");
        let completing: Vec<usize> = plan.chunks.iter().filter_map(|c| c.completes_speech_of).collect();
        assert_eq!(completing, vec![0, 1]);
    }

    proptest! {
        #[test]
        fn greedy_plan_matches_bruteforce_on_agreeing_runs(
            words in prop::collection::hash_set("[a-z]{2,6}", 2..12),
            split in 0usize..12, back in 0usize..6,
        ) {
            let words: Vec<String> = words.into_iter().collect();
            let split = split.min(words.len());
            let start = split.saturating_sub(back);
            let prev = words[..split].to_vec();
            let next = words[start..].to_vec();
            let merged = merge_plan(&prev, &next).apply(&prev, &next);
            prop_assert_eq!(&merged, &words);
            prop_assert_eq!(merged, oracle_merge(&prev, &next));
        }

        #[test]
        fn coverage_and_exact_overlap(n in 1usize..80_000, len_ms in 100u32..2000, frac in 0.0f64..0.95) {
            let overlap_ms = ((len_ms as f64) * frac) as u32;
            let params = ChunkParams { chunk_len_ms: len_ms, overlap_ms, ..Default::default() };
            let chunks = chunk_stream(&vec![0i16; n], 16_000, params, "s", "a").unwrap();
            let len = ms_to_samples(len_ms, 16_000);
            let stride = len - ms_to_samples(overlap_ms, 16_000);
            let mut covered = 0usize;
            for (k, c) in chunks.iter().enumerate() {
                let start = (c.start_time * 16_000.0).round() as usize;
                let content = (c.content_duration * 16_000.0).round() as usize;
                prop_assert_eq!(start, k * stride);
                prop_assert!(start <= covered);
                if k > 0 {
                    prop_assert_eq!(covered - start, len - stride);
                }
                covered = start + content;
            }
            prop_assert_eq!(covered, n);
        }
    }
}
