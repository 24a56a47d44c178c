//! Normalisation, resampling and idle trimming.

use super::{LandmarkError, LandmarkFile, RawLandmarkFrame};
use crate::signgen::{frame_time, Keyframe, Landmark, SignClip, FPS, HAND_LANDMARKS};

pub const LEFT_SHOULDER: usize = 11;
pub const RIGHT_SHOULDER: usize = 12;
pub const LEFT_WRIST: usize = 15;
pub const RIGHT_WRIST: usize = 16;

pub const DEFAULT_TRIM_THRESHOLD: f64 = 0.002;

/// Face-mesh indices approximating the classic 68-point facial layout:
/// jaw line, brows, nose, eyes, outer and inner lips.
pub const FACE_SUBSET: [usize; 68] = [
    127, 234, 93, 132, 58, 172, 136, 150, 176, 152, 400, 379, 365, 397, 288, 361, 454, // jaw
    70, 63, 105, 66, 107, 336, 296, 334, 293, 300, // brows
    168, 197, 5, 4, 75, 97, 2, 326, 305, // nose
    33, 160, 158, 133, 153, 144, 362, 385, 387, 263, 373, 380, // eyes
    61, 39, 37, 0, 267, 269, 291, 405, 314, 17, 84, 181, // outer lips
    78, 82, 13, 312, 308, 317, 14, 87, // inner lips
];

// Seconds; absorbs float error in `span * 30` for whole-frame spans.
const ENDPOINT_SNAP: f64 = 1e-12;

fn frame_of(p: &Landmark, origin: Landmark, scale: f64) -> Landmark {
    [0, 1, 2].map(|i| (p[i] - origin[i]) / scale)
}

fn shoulder_frame(pose: &[Landmark], frame: usize) -> Result<(Landmark, f64), LandmarkError> {
    let (l, r) = (pose[LEFT_SHOULDER], pose[RIGHT_SHOULDER]);
    let width = ((l[0] - r[0]).powi(2) + (l[1] - r[1]).powi(2) + (l[2] - r[2]).powi(2)).sqrt();
    if width.is_nan() || width < 1e-6 {
        return Err(LandmarkError::DegeneratePose { frame });
    }
    Ok(([0, 1, 2].map(|i| (l[i] + r[i]) / 2.0), width))
}

fn hold_fill(parts: Vec<Option<Vec<Landmark>>>) -> Option<Vec<Vec<Landmark>>> {
    let first = parts.iter().flatten().next()?.clone();
    let mut held = first;
    Some(
        parts
            .into_iter()
            .map(|p| {
                if let Some(p) = p {
                    held = p;
                }
                held.clone()
            })
            .collect(),
    )
}

/// Raw frames into shoulder-normalised keyframes. Missing hands hold the
/// last observed pose (the first observed for a leading gap); a hand never
/// seen collapses onto its wrist. Faces are cut down to [`FACE_SUBSET`].
pub fn normalize_frames(frames: &[RawLandmarkFrame]) -> Result<Vec<Keyframe>, LandmarkError> {
    let mut poses = Vec::with_capacity(frames.len());
    let mut lefts = Vec::with_capacity(frames.len());
    let mut rights = Vec::with_capacity(frames.len());
    let mut faces = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let pose: Vec<Landmark> = f.pose.iter().map(|p| [p[0], p[1], p[2]]).collect();
        let (origin, scale) = shoulder_frame(&pose, i)?;
        let map = |pts: &[Landmark]| pts.iter().map(|p| frame_of(p, origin, scale)).collect::<Vec<_>>();
        lefts.push(f.left_hand.as_deref().map(map));
        rights.push(f.right_hand.as_deref().map(map));
        faces.push(f.face.as_ref().map(|face| map(&FACE_SUBSET.map(|k| face[k]))));
        poses.push(map(&pose));
    }
    let wrist = |w: usize| poses.iter().map(|p| vec![p[w]; HAND_LANDMARKS]).collect::<Vec<_>>();
    let lefts = hold_fill(lefts).unwrap_or_else(|| wrist(LEFT_WRIST));
    let rights = hold_fill(rights).unwrap_or_else(|| wrist(RIGHT_WRIST));
    let faces: Vec<Option<Vec<Landmark>>> = match hold_fill(faces) {
        Some(f) => f.into_iter().map(Some).collect(),
        None => vec![None; frames.len()],
    };
    Ok(frames
        .iter()
        .zip(poses)
        .zip(lefts)
        .zip(rights)
        .zip(faces)
        .map(|((((f, pose), left_hand), right_hand), face)| Keyframe {
            t: f.t,
            pose,
            left_hand,
            right_hand,
            face,
        })
        .collect())
}

/// Re-applies the shoulder normalisation to keyframes already in skeleton
/// space (the identity up to rounding).
pub fn normalize_keyframes(frames: &[Keyframe]) -> Result<Vec<Keyframe>, LandmarkError> {
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let (origin, scale) = shoulder_frame(&f.pose, i)?;
            let map = |pts: &[Landmark]| pts.iter().map(|p| frame_of(p, origin, scale)).collect::<Vec<_>>();
            Ok(Keyframe {
                t: f.t,
                pose: map(&f.pose),
                left_hand: map(&f.left_hand),
                right_hand: map(&f.right_hand),
                face: f.face.as_deref().map(map),
            })
        })
        .collect()
}

/// Linear resampling onto the 30 fps grid starting at the first frame.
///
/// Duplicate timestamps keep the first frame. The grid runs to
/// `floor(span * 30) / 30`; when the span is a whole number of frames (up to
/// float rounding) the last grid point is the last input frame exactly.
pub fn resample_30fps(frames: &[Keyframe]) -> Result<Vec<Keyframe>, LandmarkError> {
    let mut input: Vec<&Keyframe> = Vec::with_capacity(frames.len());
    for f in frames {
        if input.last().is_none_or(|prev| f.t > prev.t) {
            input.push(f);
        }
    }
    let (first, last) = match (input.first(), input.last()) {
        (Some(a), Some(b)) if input.len() >= 2 => (*a, *b),
        _ => return Err(LandmarkError::TooShort { span: 0.0 }),
    };
    let t0 = first.t;
    let span = last.t - t0;
    if span + ENDPOINT_SNAP < 1.0 / FPS {
        return Err(LandmarkError::TooShort { span });
    }
    let exact = span * FPS;
    let snapped = (exact - exact.round()).abs() * (1.0 / FPS) <= ENDPOINT_SNAP;
    let n = if snapped {
        exact.round() as usize
    } else {
        exact.floor() as usize
    };

    let mut out = Vec::with_capacity(n + 1);
    let mut seg = 0;
    for k in 0..=n {
        let t = frame_time(k, 1.0);
        if k == 0 {
            out.push(first.clone().with_time(0.0));
            continue;
        }
        if k == n && snapped {
            out.push(last.clone().with_time(t));
            continue;
        }
        let abs = t0 + t;
        while seg + 2 < input.len() && input[seg + 1].t <= abs {
            seg += 1;
        }
        let (a, b) = (input[seg], input[seg + 1]);
        let alpha = ((abs - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        out.push(if alpha == 0.0 {
            a.clone().with_time(t)
        } else {
            Keyframe::lerp(a, b, alpha, t)
        });
    }
    Ok(out)
}

fn mean_displacement(a: &Keyframe, b: &Keyframe) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for (p, q) in a.points().zip(b.points()) {
        total += ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// Drops idle frames from the tail, then the head, never going below two
/// frames, and retimes the survivors onto `k / 30`.
pub fn trim_idle(frames: &[Keyframe], threshold: f64) -> Vec<Keyframe> {
    let (mut lo, mut hi) = (0, frames.len());
    while hi - lo > 2 && mean_displacement(&frames[hi - 2], &frames[hi - 1]) < threshold {
        hi -= 1;
    }
    while hi - lo > 2 && mean_displacement(&frames[lo], &frames[lo + 1]) < threshold {
        lo += 1;
    }
    frames[lo..hi]
        .iter()
        .enumerate()
        .map(|(k, f)| f.clone().with_time(frame_time(k, 1.0)))
        .collect()
}

/// Full per-file pipeline: normalise, resample, trim.
pub fn process_clip(file: &LandmarkFile, trim_threshold: f64) -> Result<SignClip, LandmarkError> {
    let normalized = normalize_frames(&file.frames)?;
    let resampled = resample_30fps(&normalized)?;
    let trimmed = trim_idle(&resampled, trim_threshold);
    SignClip::new(file.gloss.clone(), trimmed).map_err(|e| LandmarkError::Clip(file.gloss.clone(), e.to_string()))
}
