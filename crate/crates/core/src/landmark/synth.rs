//! Deterministic synthetic landmark corpus.
//!
//! Produces landmark JSON files that look like real extractions: mixed
//! source frame rates, idle lead-in and lead-out, occluded hands and an
//! occasional face mesh. Used for tests, benches and demo dictionaries.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

use super::{encode_dictionary, parse_landmark_str, process_clip, LandmarkError, DEFAULT_TRIM_THRESHOLD, RAW_FACE_LANDMARKS};
use crate::signgen::{fingerspell_ids, SignDictionary, HAND_LANDMARKS, POSE_LANDMARKS};

/// Everyday meeting vocabulary, including a few multi-word signs.
pub const MEETING_WORDS: &[&str] = &[
    "HELLO",
    "TEAM",
    "GOOD",
    "MORNING",
    "GOOD_MORNING",
    "EVERYONE",
    "THANK_YOU",
    "MEETING",
    "BUDGET",
    "REVIEW",
    "ACTION_ITEM",
    "PLAN",
    "PROJECT",
    "WEEK",
    "TODAY",
    "TOMORROW",
    "QUESTION",
    "ANSWER",
    "AGREE",
    "DECIDE",
    "SHIP",
    "FRIDAY",
    "MONDAY",
    "NOTES",
    "SEND",
    "READ",
    "WRITE",
    "HELP",
    "NEED",
    "WANT",
    "YES",
    "NO",
    "PLEASE",
    "SORRY",
    "HAPPY",
    "SAD",
    "ANGRY",
    "SURPRISE",
    "WORK",
    "TIME",
    "START",
    "FINISH",
    "NEXT",
    "FIRST",
    "LAST",
    "IDEA",
    "DESIGN",
    "TEST",
    "DATA",
    "REPORT",
    "SCHEDULE",
    "CALL",
    "LATE",
    "EARLY",
    "GREAT",
    "PROBLEM",
    "FIX",
    "UPDATE",
    "SHARE",
    "SCREEN",
];

/// Fingerspelling alphabet plus the first `words` meeting words.
pub fn corpus_glosses(words: usize) -> Vec<String> {
    let mut out = fingerspell_ids();
    out.extend(MEETING_WORDS.iter().take(words).map(|w| w.to_string()));
    let mut n = 0;
    while out.len() < 36 + words {
        out.push(format!("SIGN{n:03}"));
        n += 1;
    }
    out
}

fn gloss_seed(gloss: &str, seed: u64) -> u64 {
    gloss.bytes().fold(seed ^ 0x9e37_79b9_7f4a_7c15, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn pt3(p: [f64; 3]) -> Value {
    json!([round6(p[0]), round6(p[1]), round6(p[2])])
}

/// One synthetic landmark document for `gloss`.
pub fn synth_document(gloss: &str, seed: u64) -> Value {
    let mut rng = StdRng::seed_from_u64(gloss_seed(gloss, seed));
    let fps = [15.0, 24.0, 25.0, 30.0, 60.0][rng.random_range(0..5)];
    let lead_in: usize = rng.random_range(2..6);
    let moving: usize = rng.random_range(18..40);
    let lead_out: usize = rng.random_range(2..6);
    let with_face = rng.random_bool(0.15);
    let left_absent = rng.random_bool(0.2);
    let (freq, phase, amp) = (
        rng.random_range(0.5..2.0),
        rng.random_range(0.0..TAU),
        rng.random_range(0.05..0.2),
    );
    let center = [rng.random_range(0.45..0.55), rng.random_range(0.4..0.5)];
    let width = rng.random_range(0.15..0.25);
    let body: Vec<[f64; 2]> = (0..POSE_LANDMARKS)
        .map(|_| [rng.random_range(-0.3..0.3), rng.random_range(-0.2..0.6)])
        .collect();
    let hand_shape: Vec<[f64; 2]> = (0..HAND_LANDMARKS)
        .map(|_| [rng.random_range(-0.04..0.04), rng.random_range(-0.06..0.0)])
        .collect();
    let face_shape: Vec<[f64; 2]> = (0..RAW_FACE_LANDMARKS)
        .map(|_| [rng.random_range(-0.05..0.05), rng.random_range(-0.07..0.07)])
        .collect();
    let occlusions: Vec<bool> = (0..moving).map(|_| rng.random_bool(0.1)).collect();

    let pose_at = |s: f64| -> Vec<[f64; 3]> {
        let sway = amp * (TAU * freq * s + phase).sin();
        let lift = amp * (TAU * freq * s + phase).cos();
        (0..POSE_LANDMARKS)
            .map(|i| {
                let base = [center[0] + body[i][0] * width * 2.0, center[1] + body[i][1] * width * 2.0];
                match i {
                    11 => [center[0] - width / 2.0, center[1], 0.0],
                    12 => [center[0] + width / 2.0, center[1], 0.0],
                    13 | 15 | 17 | 19 | 21 => [base[0] + sway, base[1] - lift, 0.05 * sway],
                    14 | 16 | 18 | 20 | 22 => [base[0] - sway, base[1] + lift, -0.05 * sway],
                    _ => [base[0], base[1], 0.0],
                }
            })
            .collect()
    };
    let hand_at = |wrist: [f64; 3], s: f64| -> Vec<[f64; 3]> {
        let curl = 1.0 + 0.3 * (TAU * freq * 2.0 * s).sin();
        hand_shape
            .iter()
            .map(|h| [wrist[0] + h[0] * curl, wrist[1] + h[1] * curl, wrist[2]])
            .collect()
    };

    let total = lead_in + moving + lead_out;
    let frames: Vec<Value> = (0..total)
        .map(|i| {
            let m = i.saturating_sub(lead_in).min(moving - 1);
            let s = m as f64 / fps;
            let pose = pose_at(s);
            let occluded = occlusions[m];
            let left = (!left_absent && !occluded).then(|| hand_at(pose[15], s));
            let right = (!occluded).then(|| hand_at(pose[16], s));
            let face = with_face.then(|| {
                let nose = [pose[0][0], pose[0][1]];
                face_shape
                    .iter()
                    .map(|f| [nose[0] + f[0], nose[1] + f[1], 0.0])
                    .collect::<Vec<_>>()
            });
            json!({
                "t": i as f64 / fps,
                "pose": pose.iter().map(|p| json!([round6(p[0]), round6(p[1]), round6(p[2]), 0.99])).collect::<Vec<_>>(),
                "left_hand": left.map(|h| h.into_iter().map(pt3).collect::<Vec<_>>()),
                "right_hand": right.map(|h| h.into_iter().map(pt3).collect::<Vec<_>>()),
                "face": face.map(|f| f.into_iter().map(pt3).collect::<Vec<_>>()),
            })
        })
        .collect();
    json!({ "gloss": gloss, "fps": fps, "coords": "image", "frames": frames })
}

/// Writes one `<gloss>.json` per gloss into `dir`.
pub fn write_corpus(dir: &Path, glosses: &[String], seed: u64) -> Result<Vec<PathBuf>, LandmarkError> {
    std::fs::create_dir_all(dir).map_err(|e| LandmarkError::io(dir, e))?;
    glosses
        .iter()
        .map(|g| {
            let path = dir.join(format!("{}.json", g.to_lowercase()));
            std::fs::write(&path, synth_document(g, seed).to_string()).map_err(|e| LandmarkError::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

/// Builds in memory the dictionary that compiling `write_corpus(dir,
/// corpus_glosses(words), seed)` would produce, version included.
pub fn demo_dictionary(words: usize, seed: u64) -> Result<SignDictionary, LandmarkError> {
    let entries = corpus_glosses(words)
        .iter()
        .map(|g| {
            let name = format!("{}.json", g.to_lowercase());
            let file = parse_landmark_str(&synth_document(g, seed).to_string(), &name)?;
            Ok((process_clip(&file, DEFAULT_TRIM_THRESHOLD)?, name))
        })
        .collect::<Result<Vec<_>, LandmarkError>>()?;
    let (_, _, version) = encode_dictionary(&entries)?;
    SignDictionary::new(entries.into_iter().map(|(clip, _)| clip), version).map_err(|e| LandmarkError::Format(e.to_string()))
}
