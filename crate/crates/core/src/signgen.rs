//! Text to sign animation.
//!
//! Text is reduced to a gloss sequence by greedy longest match against the
//! sign dictionary, with fingerspelling for words that have no sign. Clips are
//! chained with short linear transitions into a 30 fps keyframe sequence whose
//! playback speed can be changed without touching the frames.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids;

pub const FPS: f64 = 30.0;
pub const POSE_LANDMARKS: usize = 33;
pub const HAND_LANDMARKS: usize = 21;
pub const FACE_LANDMARKS: usize = 68;
pub const DEFAULT_TRANSITION_FRAMES: usize = 5;
pub const MIN_SPEED: f64 = 0.25;
pub const MAX_SPEED: f64 = 2.0;
pub const FINGERSPELL_PREFIX: &str = "FS_";

/// Articles dropped before gloss matching.
pub const DEFAULT_STOPWORDS: [&str; 3] = ["a", "an", "the"];

pub type Landmark = [f64; 3];

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SignError {
    #[error("no glosses to animate")]
    EmptySequence,
    #[error("sign {0} is not in the dictionary")]
    MissingSign(String),
    #[error("signing speed {0} outside [0.25, 2.0]")]
    InvalidSpeed(f64),
    #[error("fingerspelling alphabet incomplete, missing {0:?}")]
    IncompleteFingerspell(Vec<String>),
    #[error("invalid clip {gloss}: {message}")]
    InvalidClip { gloss: String, message: String },
    #[error("sequence {0} is not in the replay buffer")]
    NotInBuffer(String),
}

impl SignError {
    pub fn code(&self) -> &'static str {
        match self {
            SignError::EmptySequence => "EMPTY_SEQUENCE",
            SignError::MissingSign(_) => "MISSING_SIGN",
            SignError::InvalidSpeed(_) => "INVALID_SPEED",
            SignError::IncompleteFingerspell(_) => "INCOMPLETE_FINGERSPELL_SET",
            SignError::InvalidClip { .. } => "INVALID_CLIP",
            SignError::NotInBuffer(_) => "NOT_IN_BUFFER",
        }
    }
}

/// Timestamp of frame `k` on the 30 fps grid at `speed`.
pub fn frame_time(k: usize, speed: f64) -> f64 {
    k as f64 / (FPS * speed)
}

pub fn check_speed(speed: f64) -> Result<(), SignError> {
    if (MIN_SPEED..=MAX_SPEED).contains(&speed) {
        Ok(())
    } else {
        Err(SignError::InvalidSpeed(speed))
    }
}

/// One skeleton pose in normalised signing space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub t: f64,
    pub pose: Vec<Landmark>,
    pub left_hand: Vec<Landmark>,
    pub right_hand: Vec<Landmark>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face: Option<Vec<Landmark>>,
}

fn lerp_points(a: &[Landmark], b: &[Landmark], alpha: f64) -> Vec<Landmark> {
    a.iter()
        .zip(b)
        .map(|(p, q)| [0, 1, 2].map(|i| p[i] + (q[i] - p[i]) * alpha))
        .collect()
}

impl Keyframe {
    pub fn check_counts(&self) -> Result<(), String> {
        if self.pose.len() != POSE_LANDMARKS {
            return Err(format!("pose has {} landmarks", self.pose.len()));
        }
        if self.left_hand.len() != HAND_LANDMARKS || self.right_hand.len() != HAND_LANDMARKS {
            return Err("hands need 21 landmarks each".into());
        }
        if let Some(face) = &self.face {
            if face.len() != FACE_LANDMARKS {
                return Err(format!("face has {} landmarks", face.len()));
            }
        }
        if self.t.is_nan() || self.t < 0.0 {
            return Err(format!("negative timestamp {}", self.t));
        }
        Ok(())
    }

    /// Linear blend of every landmark; `alpha = 0` gives `a`, `1` gives `b`.
    pub fn lerp(a: &Keyframe, b: &Keyframe, alpha: f64, t: f64) -> Keyframe {
        Keyframe {
            t,
            pose: lerp_points(&a.pose, &b.pose, alpha),
            left_hand: lerp_points(&a.left_hand, &b.left_hand, alpha),
            right_hand: lerp_points(&a.right_hand, &b.right_hand, alpha),
            face: match (&a.face, &b.face) {
                (Some(fa), Some(fb)) => Some(lerp_points(fa, fb, alpha)),
                _ => None,
            },
        }
    }

    /// Every landmark, body first.
    pub fn points(&self) -> impl Iterator<Item = &Landmark> {
        self.pose
            .iter()
            .chain(&self.left_hand)
            .chain(&self.right_hand)
            .chain(self.face.iter().flatten())
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }
}

/// A dictionary sign: keyframes on the exact 30 fps grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignClip {
    pub gloss_id: String,
    pub frames: Vec<Keyframe>,
    pub duration: f64,
}

impl SignClip {
    pub fn new(gloss_id: impl Into<String>, frames: Vec<Keyframe>) -> Result<Self, SignError> {
        let gloss_id = gloss_id.into();
        let invalid = |message: String| SignError::InvalidClip {
            gloss: gloss_id.clone(),
            message,
        };
        if frames.len() < 2 {
            return Err(invalid(format!("needs at least 2 frames, has {}", frames.len())));
        }
        for (k, f) in frames.iter().enumerate() {
            f.check_counts().map_err(|m| invalid(format!("frame {k}: {m}")))?;
            if f.t != frame_time(k, 1.0) {
                return Err(invalid(format!("frame {k} at t={} is off the 30 fps grid", f.t)));
            }
        }
        let duration = frame_time(frames.len() - 1, 1.0);
        Ok(Self {
            gloss_id,
            frames,
            duration,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlossKind {
    Dictionary,
    Fingerspell,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Gloss {
    pub gloss_id: String,
    pub kind: GlossKind,
    /// Half-open range of token indices (after punctuation stripping) this
    /// gloss renders.
    pub source_span: (usize, usize),
}

/// Maps a character onto the manual alphabet, folding common accents.
pub fn fingerspell_char(c: char) -> Option<char> {
    let folded = match c {
        'à' | 'á' | 'â' | 'ã' | 'ä' | 'å' | 'À' | 'Á' | 'Â' | 'Ã' | 'Ä' | 'Å' => 'A',
        'ç' | 'Ç' => 'C',
        'è' | 'é' | 'ê' | 'ë' | 'È' | 'É' | 'Ê' | 'Ë' => 'E',
        'ì' | 'í' | 'î' | 'ï' | 'Ì' | 'Í' | 'Î' | 'Ï' => 'I',
        'ñ' | 'Ñ' => 'N',
        'ò' | 'ó' | 'ô' | 'õ' | 'ö' | 'ø' | 'Ò' | 'Ó' | 'Ô' | 'Õ' | 'Ö' | 'Ø' => 'O',
        'ù' | 'ú' | 'û' | 'ü' | 'Ù' | 'Ú' | 'Û' | 'Ü' => 'U',
        'ý' | 'ÿ' | 'Ý' => 'Y',
        'ß' => 'S',
        c if c.is_ascii_alphanumeric() => c.to_ascii_uppercase(),
        _ => return None,
    };
    Some(folded)
}

pub fn fingerspell_id(c: char) -> String {
    format!("{FINGERSPELL_PREFIX}{c}")
}

/// The 36 manual-alphabet gloss ids: `FS_A`..`FS_Z`, `FS_0`..`FS_9`.
pub fn fingerspell_ids() -> Vec<String> {
    ('A'..='Z').chain('0'..='9').map(fingerspell_id).collect()
}

/// Sign clips by gloss id, plus the multi-word index used for matching.
#[derive(Debug, Clone)]
pub struct SignDictionary {
    entries: HashMap<String, Arc<SignClip>>,
    multiword: HashMap<Vec<String>, String>,
    max_key_len: usize,
    version: u64,
}

impl SignDictionary {
    /// Builds a dictionary; the fingerspelling alphabet must be complete.
    pub fn new(clips: impl IntoIterator<Item = SignClip>, version: u64) -> Result<Self, SignError> {
        let dict = Self::new_unchecked(clips, version);
        let missing = dict.missing_fingerspell();
        if missing.is_empty() {
            Ok(dict)
        } else {
            Err(SignError::IncompleteFingerspell(missing))
        }
    }

    /// Builds a dictionary without the alphabet check (inspection tools).
    pub fn new_unchecked(clips: impl IntoIterator<Item = SignClip>, version: u64) -> Self {
        let entries: HashMap<String, Arc<SignClip>> = clips.into_iter().map(|c| (c.gloss_id.clone(), Arc::new(c))).collect();
        let mut multiword = HashMap::new();
        let mut max_key_len = 1;
        for id in entries.keys() {
            if id.starts_with(FINGERSPELL_PREFIX) || !id.contains('_') {
                continue;
            }
            let key: Vec<String> = id.split('_').filter(|p| !p.is_empty()).map(str::to_lowercase).collect();
            if key.len() >= 2 {
                max_key_len = max_key_len.max(key.len());
                multiword.insert(key, id.clone());
            }
        }
        Self {
            entries,
            multiword,
            max_key_len,
            version,
        }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, gloss_id: &str) -> bool {
        self.entries.contains_key(gloss_id)
    }

    pub fn get(&self, gloss_id: &str) -> Option<&Arc<SignClip>> {
        self.entries.get(gloss_id)
    }

    pub fn gloss_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.entries.keys().map(String::as_str).collect();
        ids.sort_unstable();
        ids
    }

    pub fn missing_fingerspell(&self) -> Vec<String> {
        fingerspell_ids()
            .into_iter()
            .filter(|id| !self.entries.contains_key(id))
            .collect()
    }

    /// Single-word sign for a normalised token, with plural-s fallback.
    fn single(&self, token: &str) -> Option<String> {
        let id = token.to_uppercase();
        let usable = |id: &str| !id.starts_with(FINGERSPELL_PREFIX) && !id.contains('_') && self.entries.contains_key(id);
        if usable(&id) {
            return Some(id);
        }
        let stem = id.strip_suffix('S')?;
        (stem.chars().count() >= 2 && usable(stem)).then(|| stem.to_owned())
    }
}

/// Lowercase, punctuation-free tokens paired with their token index.
fn gloss_tokens(text: &str, stopwords: &[&str]) -> Vec<(usize, String)> {
    text.split_whitespace()
        .map(crate::text::normalize_word)
        .filter(|t| !t.is_empty())
        .enumerate()
        .filter(|(_, t)| !stopwords.contains(&t.as_str()))
        .collect()
}

/// Glosses for `text` using the default article stopwords.
pub fn tokenize_to_glosses(text: &str, dict: &SignDictionary) -> Vec<Gloss> {
    tokenize_to_glosses_with(text, dict, &DEFAULT_STOPWORDS)
}

/// Greedy longest match over multi-word keys, then single words (with plural
/// stripping), then fingerspelling of whatever is left.
pub fn tokenize_to_glosses_with(text: &str, dict: &SignDictionary, stopwords: &[&str]) -> Vec<Gloss> {
    let tokens = gloss_tokens(text, stopwords);
    let mut out = Vec::new();
    let mut i = 0;
    'outer: while i < tokens.len() {
        let longest = dict.max_key_len.min(tokens.len() - i);
        for len in (2..=longest).rev() {
            let key: Vec<String> = tokens[i..i + len].iter().map(|(_, t)| t.clone()).collect();
            if let Some(id) = dict.multiword.get(&key) {
                out.push(Gloss {
                    gloss_id: id.clone(),
                    kind: GlossKind::Dictionary,
                    source_span: (tokens[i].0, tokens[i + len - 1].0 + 1),
                });
                i += len;
                continue 'outer;
            }
        }
        let (index, token) = &tokens[i];
        let span = (*index, index + 1);
        match dict.single(token) {
            Some(id) => out.push(Gloss {
                gloss_id: id,
                kind: GlossKind::Dictionary,
                source_span: span,
            }),
            None => out.extend(token.chars().filter_map(fingerspell_char).map(|c| Gloss {
                gloss_id: fingerspell_id(c),
                kind: GlossKind::Fingerspell,
                source_span: span,
            })),
        }
        i += 1;
    }
    out
}

pub fn lookup_sign(gloss: &Gloss, dict: &SignDictionary) -> Result<Arc<SignClip>, SignError> {
    dict.get(&gloss.gloss_id)
        .cloned()
        .ok_or_else(|| SignError::MissingSign(gloss.gloss_id.clone()))
}

/// Clip reference inside a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRef {
    pub gloss_id: String,
    pub kind: GlossKind,
    pub frame_count: usize,
}

/// Chained sign clips with transitions, timed for a playback speed.
///
/// Frames are materialised on demand from shared dictionary clips, so
/// sequences are cheap to keep in replay buffers and to re-time.
#[derive(Debug, Clone)]
pub struct AnimationSequence {
    pub sequence_id: String,
    pub utterance_id: String,
    pub glosses: Vec<Gloss>,
    pub clips: Vec<Arc<SignClip>>,
    pub transition_frames: usize,
    pub speed: f64,
    pub dictionary_version: u64,
}

impl PartialEq for AnimationSequence {
    fn eq(&self, other: &Self) -> bool {
        self.sequence_id == other.sequence_id
            && self.utterance_id == other.utterance_id
            && self.glosses == other.glosses
            && self.transition_frames == other.transition_frames
            && self.speed == other.speed
            && self.clips.len() == other.clips.len()
            && self.clips.iter().zip(&other.clips).all(|(a, b)| Arc::ptr_eq(a, b) || a == b)
    }
}

impl AnimationSequence {
    /// Clip frames plus transition frames.
    pub fn frame_count(&self) -> usize {
        let clip_frames: usize = self.clips.iter().map(|c| c.frame_count()).sum();
        clip_frames + self.transition_frames * self.clips.len().saturating_sub(1)
    }

    pub fn total_duration(&self) -> f64 {
        frame_time(self.frame_count().saturating_sub(1), self.speed)
    }

    pub fn clip_refs(&self) -> Vec<ClipRef> {
        self.glosses
            .iter()
            .zip(&self.clips)
            .map(|(g, c)| ClipRef {
                gloss_id: g.gloss_id.clone(),
                kind: g.kind,
                frame_count: c.frame_count(),
            })
            .collect()
    }

    /// The same frames retimed for another playback speed.
    pub fn respeed(&self, speed: f64) -> Result<AnimationSequence, SignError> {
        check_speed(speed)?;
        Ok(AnimationSequence { speed, ..self.clone() })
    }

    /// Every keyframe with its timestamp at this sequence's speed.
    pub fn frames(&self) -> Vec<Keyframe> {
        let mut out = Vec::with_capacity(self.frame_count());
        let steps = self.transition_frames as f64 + 1.0;
        for (i, clip) in self.clips.iter().enumerate() {
            if i > 0 {
                let from = self.clips[i - 1].frames.last().expect("clips have frames");
                let to = &clip.frames[0];
                for j in 1..=self.transition_frames {
                    let t = frame_time(out.len(), self.speed);
                    out.push(Keyframe::lerp(from, to, j as f64 / steps, t));
                }
            }
            for frame in &clip.frames {
                let t = frame_time(out.len(), self.speed);
                out.push(frame.clone().with_time(t));
            }
        }
        out
    }
}

/// Chains the clips for `glosses` with linear transitions.
pub fn assemble_animation(
    glosses: &[Gloss],
    dict: &SignDictionary,
    speed: f64,
    transition_frames: usize,
    utterance_id: &str,
) -> Result<AnimationSequence, SignError> {
    check_speed(speed)?;
    if glosses.is_empty() {
        return Err(SignError::EmptySequence);
    }
    let clips = glosses.iter().map(|g| lookup_sign(g, dict)).collect::<Result<Vec<_>, _>>()?;
    Ok(AnimationSequence {
        sequence_id: ids::new_id(),
        utterance_id: utterance_id.to_owned(),
        glosses: glosses.to_vec(),
        clips,
        transition_frames,
        speed,
        dictionary_version: dict.version(),
    })
}

/// Text straight to animation at unit speed.
pub fn animate_text(
    text: &str,
    dict: &SignDictionary,
    transition_frames: usize,
    utterance_id: &str,
) -> Result<AnimationSequence, SignError> {
    let glosses = tokenize_to_glosses(text, dict);
    assemble_animation(&glosses, dict, 1.0, transition_frames, utterance_id)
}

/// Fixed-capacity ring of recent sequences; the oldest is evicted first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: std::collections::VecDeque<AnimationSequence>,
}

pub const DEFAULT_REPLAY_CAPACITY: usize = 16;

impl Default for ReplayBuffer {
    fn default() -> Self {
        Self::new(DEFAULT_REPLAY_CAPACITY)
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            items: Default::default(),
        }
    }

    pub fn push(&mut self, sequence: AnimationSequence) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(sequence);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn last(&self) -> Option<&AnimationSequence> {
        self.items.back()
    }

    /// Re-emits a buffered sequence, optionally at another speed.
    pub fn replay(&self, sequence_id: &str, speed: Option<f64>) -> Result<AnimationSequence, SignError> {
        let found = self
            .items
            .iter()
            .find(|s| s.sequence_id == sequence_id)
            .ok_or_else(|| SignError::NotInBuffer(sequence_id.to_owned()))?;
        match speed {
            Some(s) => found.respeed(s),
            None => Ok(found.clone()),
        }
    }
}

/// Ids of every gloss a dictionary must resolve for `texts` (batch helper).
pub fn required_glosses(texts: &[&str], dict: &SignDictionary) -> HashSet<String> {
    texts
        .iter()
        .flat_map(|t| tokenize_to_glosses(t, dict))
        .map(|g| g.gloss_id)
        .collect()
}

/// Simple deterministic clips for tests and tooling.
pub mod fixtures {
    use super::*;

    /// A clip of `frames` frames whose landmarks drift with `seed`.
    pub fn clip(gloss_id: &str, frames: usize, seed: f64) -> SignClip {
        let frames = (0..frames)
            .map(|k| {
                let s = seed + k as f64 * 0.01;
                Keyframe {
                    t: frame_time(k, 1.0),
                    pose: (0..POSE_LANDMARKS).map(|i| [s + i as f64, -s, 0.5 * s]).collect(),
                    left_hand: (0..HAND_LANDMARKS).map(|i| [s - i as f64, s, 1.0]).collect(),
                    right_hand: (0..HAND_LANDMARKS).map(|i| [s * 2.0, i as f64, -1.0]).collect(),
                    face: None,
                }
            })
            .collect();
        SignClip::new(gloss_id, frames).expect("fixture clip is valid")
    }

    /// Fingerspelling alphabet plus the given words, each with `frames` frames.
    pub fn dictionary(words: &[&str], frames: usize) -> SignDictionary {
        let clips = fingerspell_ids()
            .iter()
            .map(String::as_str)
            .chain(words.iter().copied())
            .enumerate()
            .map(|(i, id)| clip(id, frames, i as f64))
            .collect::<Vec<_>>();
        SignDictionary::new(clips, 1).expect("fixture dictionary is complete")
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::{clip, dictionary};
    use super::*;
    use proptest::prelude::*;

    fn ids(glosses: &[Gloss]) -> Vec<&str> {
        glosses.iter().map(|g| g.gloss_id.as_str()).collect()
    }

    /// Exhaustive segmentation: maximise dictionary-matched tokens, then
    /// prefer fewer glosses.
    fn oracle_segment(tokens: &[String], dict_ids: &[&str]) -> Vec<String> {
        fn best(i: usize, tokens: &[String], dict_ids: &[&str]) -> (usize, usize, Vec<String>) {
            if i == tokens.len() {
                return (0, 0, Vec::new());
            }
            let mut options = Vec::new();
            for id in dict_ids {
                if id.starts_with("FS_") {
                    continue;
                }
                let key: Vec<String> = id.split('_').map(str::to_lowercase).collect();
                let matches = if key.len() == 1 {
                    let t = &tokens[i];
                    *t == key[0]
                        || (t.len() > 2
                            && t.ends_with('s')
                            && t[..t.len() - 1] == key[0]
                            && !dict_ids.contains(&t.to_uppercase().as_str()))
                } else {
                    tokens.len() - i >= key.len() && tokens[i..i + key.len()] == key[..]
                };
                if matches {
                    let (m, g, mut rest) = best(i + key.len(), tokens, dict_ids);
                    rest.insert(0, id.to_string());
                    options.push((m + key.len(), g + 1, rest));
                }
            }
            let (m, g, mut rest) = best(i + 1, tokens, dict_ids);
            let spelled: Vec<String> = tokens[i].chars().filter_map(fingerspell_char).map(fingerspell_id).collect();
            let n = spelled.len();
            rest.splice(0..0, spelled);
            options.push((m, g + n, rest));
            options.into_iter().max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1))).unwrap()
        }
        best(0, tokens, dict_ids).2
    }

    #[test]
    fn review_the_action_item() {
        let dict = dictionary(&["ACTION_ITEM", "REVIEW"], 10);
        let glosses = tokenize_to_glosses("Review the action item.", &dict);
        assert_eq!(ids(&glosses), vec!["REVIEW", "ACTION_ITEM"]);
        assert_eq!(glosses[1].source_span, (2, 4));
        let tokens: Vec<String> = vec!["review".into(), "action".into(), "item".into()];
        assert_eq!(oracle_segment(&tokens, &dict.gloss_ids()), vec!["REVIEW", "ACTION_ITEM"]);
    }

    #[test]
    fn oov_is_fingerspelled() {
        let dict = dictionary(&["HELLO"], 10);
        let glosses = tokenize_to_glosses("XR", &dict);
        assert_eq!(ids(&glosses), vec!["FS_X", "FS_R"]);
        assert!(glosses.iter().all(|g| g.kind == GlossKind::Fingerspell));
        assert!(tokenize_to_glosses("", &dict).is_empty());
        assert_eq!(ids(&tokenize_to_glosses("Café", &dict)), vec!["FS_C", "FS_A", "FS_F", "FS_E"]);
    }

    #[test]
    fn plural_stripping() {
        let dict = dictionary(&["ITEM"], 10);
        assert_eq!(ids(&tokenize_to_glosses("items", &dict)), vec!["ITEM"]);
    }

    #[test]
    fn lookups() {
        let dict = dictionary(&["HELLO"], 10);
        let hello = Gloss {
            gloss_id: "HELLO".into(),
            kind: GlossKind::Dictionary,
            source_span: (0, 1),
        };
        assert_eq!(lookup_sign(&hello, &dict).unwrap().gloss_id, "HELLO");
        let q = Gloss {
            gloss_id: "FS_Q".into(),
            kind: GlossKind::Fingerspell,
            source_span: (0, 1),
        };
        assert_eq!(lookup_sign(&q, &dict).unwrap().gloss_id, "FS_Q");
        let stale = Gloss {
            gloss_id: "BUDGET".into(),
            kind: GlossKind::Dictionary,
            source_span: (0, 1),
        };
        assert_eq!(lookup_sign(&stale, &dict).unwrap_err().code(), "MISSING_SIGN");
    }

    #[test]
    fn incomplete_alphabet_rejected() {
        let err = SignDictionary::new(vec![clip("HELLO", 5, 0.0)], 1).unwrap_err();
        assert_eq!(err.code(), "INCOMPLETE_FINGERSPELL_SET");
    }

    #[test]
    fn two_clips_frame_arithmetic() {
        let dict = dictionary(&["HELLO", "TEAM"], 30);
        let glosses = tokenize_to_glosses("hello team", &dict);
        let seq = assemble_animation(&glosses, &dict, 1.0, 5, "u").unwrap();
        // oracle: sum of clip frames plus transitions between neighbours
        let expected_frames = 30 + 30 + 5;
        assert_eq!(seq.frame_count(), expected_frames);
        assert_eq!(seq.frames().len(), expected_frames);
        assert!((seq.total_duration() - 64.0 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn half_speed_single_clip() {
        let dict = dictionary(&["HELLO"], 60);
        let glosses = tokenize_to_glosses("hello", &dict);
        let seq = assemble_animation(&glosses, &dict, 0.5, 5, "u").unwrap();
        assert!((seq.total_duration() - (59.0 / 30.0) / 0.5).abs() < 1e-12);
        assert!((seq.total_duration() - 3.9333333).abs() < 1e-6);
    }

    #[test]
    fn empty_and_bad_speed() {
        let dict = dictionary(&[], 10);
        assert_eq!(
            assemble_animation(&[], &dict, 1.0, 5, "u").unwrap_err().code(),
            "EMPTY_SEQUENCE"
        );
        let glosses = tokenize_to_glosses("a b", &dict);
        assert_eq!(
            assemble_animation(&glosses, &dict, 3.0, 5, "u").unwrap_err().code(),
            "INVALID_SPEED"
        );
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn transitions_interpolate() {
        let dict = dictionary(&["HELLO", "TEAM"], 4);
        let seq = animate_text("hello team", &dict, 5, "u").unwrap();
        let frames = seq.frames();
        let (from, to) = (&frames[3], &frames[9]);
        for j in 1..=5 {
            let f = &frames[3 + j];
            let alpha = j as f64 / 6.0;
            for (k, p) in f.pose.iter().enumerate() {
                for d in 0..3 {
                    let expect = from.pose[k][d] + (to.pose[k][d] - from.pose[k][d]) * alpha;
                    assert!((p[d] - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn replay_ring() {
        let dict = dictionary(&["HELLO"], 10);
        let mut ring = ReplayBuffer::new(16);
        let first = animate_text("hello", &dict, 5, "u0").unwrap();
        let first_id = first.sequence_id.clone();
        ring.push(first.clone());
        let slow = ring.replay(&first_id, Some(0.5)).unwrap();
        assert_eq!(slow.frame_count(), first.frame_count());
        assert!((slow.total_duration() - 2.0 * first.total_duration()).abs() < 1e-12);
        assert_eq!(ring.replay(&first_id, None).unwrap().speed, 1.0);
        for i in 0..17 {
            ring.push(animate_text("hello", &dict, 5, &format!("u{i}")).unwrap());
        }
        assert_eq!(ring.len(), 16);
        assert_eq!(ring.replay(&first_id, None).unwrap_err().code(), "NOT_IN_BUFFER");
    }

    proptest! {
        #[test]
        fn greedy_equals_exhaustive(tokens in prop::collection::vec(prop::sample::select(vec![
            "review", "action", "item", "items", "budget", "plan", "team", "meeting", "xr", "q3", "notes",
        ]), 0..8)) {
            let dict = dictionary(&["REVIEW", "ACTION_ITEM", "ITEM", "BUDGET", "TEAM_MEETING", "TEAM", "NOTES"], 3);
            let text = tokens.join(" ");
            let glosses = tokenize_to_glosses(&text, &dict);
            let owned: Vec<String> = tokens.iter().map(|s| s.to_string()).collect();
            prop_assert_eq!(ids(&glosses), oracle_segment(&owned, &dict.gloss_ids()));
        }

        #[test]
        fn timestamps_uniform(speed in 0.25f64..=2.0, n in 1usize..5) {
            let dict = dictionary(&["HELLO"], 7);
            let text = vec!["hello"; n].join(" ");
            let seq = assemble_animation(&tokenize_to_glosses(&text, &dict), &dict, speed, 5, "u").unwrap();
            let frames = seq.frames();
            for (k, f) in frames.iter().enumerate() {
                prop_assert_eq!(f.t, k as f64 / (30.0 * speed));
            }
            let expect = (7 * n + 5 * (n - 1) - 1) as f64 / (30.0 * speed);
            prop_assert!((seq.total_duration() - expect).abs() < 1e-12);
        }
    }
}
