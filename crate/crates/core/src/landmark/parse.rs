//! Landmark JSON input.
//!
//! ```json
//! {"gloss": "HELLO", "fps": 25, "coords": "image",
//!  "frames": [{"t": 0.0, "pose": [[x, y, z, v], ...33],
//!              "left_hand": [[x, y, z], ...21] | null,
//!              "right_hand": null, "face": [[x, y, z], ...468] | null}]}
//! ```
//!
//! `t` is optional and defaults to `index / fps`. Image coordinates (y grows
//! downward) are flipped at parse time so every later stage sees y up.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{LandmarkError, RAW_FACE_LANDMARKS};
use crate::signgen::{HAND_LANDMARKS, POSE_LANDMARKS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coords {
    #[default]
    Image,
    World,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawLandmarkFrame {
    pub t: f64,
    /// x, y, z, visibility.
    pub pose: Vec<[f64; 4]>,
    pub left_hand: Option<Vec<[f64; 3]>>,
    pub right_hand: Option<Vec<[f64; 3]>>,
    pub face: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFile {
    pub gloss: String,
    pub source_file: String,
    pub fps: f64,
    pub coords: Coords,
    pub frames: Vec<RawLandmarkFrame>,
}

#[derive(Deserialize)]
struct Document {
    gloss: String,
    fps: f64,
    #[serde(default)]
    coords: Coords,
    frames: Vec<Value>,
}

#[derive(Deserialize)]
struct FrameDoc {
    t: Option<f64>,
    pose: Vec<Vec<f64>>,
    #[serde(default)]
    left_hand: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    right_hand: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    face: Option<Vec<Vec<f64>>>,
}

pub fn parse_landmark_file(path: &Path) -> Result<LandmarkFile, LandmarkError> {
    let text = std::fs::read_to_string(path).map_err(|e| LandmarkError::io(path, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    parse_landmark_str(&text, &name)
}

pub fn parse_landmark_str(text: &str, source: &str) -> Result<LandmarkFile, LandmarkError> {
    let parse_err = |frame: Option<usize>, message: String| LandmarkError::Parse {
        path: source.to_owned(),
        frame,
        message,
    };
    let doc: Document = serde_json::from_str(text).map_err(|e| parse_err(None, e.to_string()))?;
    let gloss = doc.gloss.trim().to_uppercase();
    if gloss.is_empty() || !gloss.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(parse_err(None, format!("gloss {:?} must be [A-Z0-9_]+", doc.gloss)));
    }
    if !doc.fps.is_finite() || doc.fps <= 0.0 {
        return Err(parse_err(None, format!("fps must be positive, got {}", doc.fps)));
    }
    let flip = doc.coords == Coords::Image;
    let mut frames = Vec::with_capacity(doc.frames.len());
    for (i, value) in doc.frames.into_iter().enumerate() {
        let f: FrameDoc = serde_json::from_value(value).map_err(|e| parse_err(Some(i), e.to_string()))?;
        let count = |part: &'static str, expected: usize, got: usize| -> Result<(), LandmarkError> {
            if got == expected {
                Ok(())
            } else {
                Err(LandmarkError::WrongLandmarkCount {
                    path: source.to_owned(),
                    frame: i,
                    part,
                    expected,
                    got,
                })
            }
        };
        count("pose", POSE_LANDMARKS, f.pose.len())?;
        let mut pose = Vec::with_capacity(POSE_LANDMARKS);
        for p in &f.pose {
            let [x, y, z] = xyz(p).ok_or_else(|| parse_err(Some(i), "pose landmarks need 3 or 4 numbers".into()))?;
            let v = p.get(3).copied().unwrap_or(1.0);
            pose.push([x, if flip { -y } else { y }, z, v]);
        }
        let part =
            |name: &'static str, pts: Option<Vec<Vec<f64>>>, expected: usize| -> Result<Option<Vec<[f64; 3]>>, LandmarkError> {
                let Some(pts) = pts else { return Ok(None) };
                count(name, expected, pts.len())?;
                pts.iter()
                    .map(|p| {
                        xyz(p)
                            .map(|[x, y, z]| [x, if flip { -y } else { y }, z])
                            .ok_or_else(|| parse_err(Some(i), format!("{name} landmarks need 3 numbers")))
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .map(Some)
            };
        let left_hand = part("left_hand", f.left_hand, HAND_LANDMARKS)?;
        let right_hand = part("right_hand", f.right_hand, HAND_LANDMARKS)?;
        let face = part("face", f.face, RAW_FACE_LANDMARKS)?;
        let t = f.t.unwrap_or(i as f64 / doc.fps);
        if !t.is_finite() {
            return Err(parse_err(Some(i), "timestamp is not finite".into()));
        }
        if let Some(prev) = frames.last().map(|p: &RawLandmarkFrame| p.t) {
            if t < prev {
                return Err(parse_err(Some(i), format!("timestamp {t} goes backwards from {prev}")));
            }
        }
        frames.push(RawLandmarkFrame {
            t,
            pose,
            left_hand,
            right_hand,
            face,
        });
    }
    Ok(LandmarkFile {
        gloss,
        source_file: source.to_owned(),
        fps: doc.fps,
        coords: doc.coords,
        frames,
    })
}

fn xyz(p: &[f64]) -> Option<[f64; 3]> {
    match p {
        [x, y, z] | [x, y, z, _] if x.is_finite() && y.is_finite() && z.is_finite() => Some([*x, *y, *z]),
        _ => None,
    }
}
