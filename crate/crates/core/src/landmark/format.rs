//! Binary sign dictionary.
//!
//! All integers and floats are little endian.
//!
//! ```text
//! header   magic "AXSD" | version u16 | fps u16 | entry count u32 | dictionary version u64
//! index    per entry, sorted by gloss:
//!          gloss len u16 | gloss utf-8 | source len u16 | source utf-8 |
//!          frame count u32 | has_face u8 | payload offset u64 | payload len u64 | sha256 [32]
//! payload  per entry, per frame: t f64 | pose 33x3 f64 | left hand 21x3 | right hand 21x3 |
//!          face 68x3 (only when has_face)
//! ```
//!
//! Payload offsets are relative to the end of the index. The dictionary
//! version is the first eight bytes of a SHA-256 over every gloss and entry
//! checksum, so any content change yields a new version.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::LandmarkError;
use crate::signgen::{Keyframe, Landmark, SignClip, SignDictionary, FACE_LANDMARKS, HAND_LANDMARKS, POSE_LANDMARKS};

pub const MAGIC: &[u8; 4] = b"AXSD";
pub const FORMAT_VERSION: u16 = 1;
pub const FILE_FPS: u16 = 30;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClipRecord {
    pub gloss_id: String,
    pub source_file: String,
    pub frame_count: u32,
    pub duration: f64,
    pub has_face: bool,
    pub offset: u64,
    pub len: u64,
    #[serde(serialize_with = "hex")]
    pub checksum: [u8; 32],
}

fn hex<S: serde::Serializer>(bytes: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&to_hex(bytes))
}

pub(crate) fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// A decoded header and index plus the raw payload bytes.
#[derive(Debug, Clone)]
pub struct DictionaryFile {
    pub version: u16,
    pub fps: u16,
    pub dictionary_version: u64,
    pub records: Vec<ClipRecord>,
    pub payload: Vec<u8>,
}

fn frame_floats(has_face: bool) -> usize {
    1 + 3 * (POSE_LANDMARKS + 2 * HAND_LANDMARKS + if has_face { FACE_LANDMARKS } else { 0 })
}

pub(crate) fn encode_clip(clip: &SignClip) -> Result<(Vec<u8>, bool), LandmarkError> {
    let has_face = clip.frames.first().is_some_and(|f| f.face.is_some());
    let mut out = Vec::with_capacity(clip.frames.len() * frame_floats(has_face) * 8);
    for (k, f) in clip.frames.iter().enumerate() {
        if f.face.is_some() != has_face {
            return Err(LandmarkError::Clip(
                clip.gloss_id.clone(),
                format!("frame {k} face presence differs from frame 0"),
            ));
        }
        out.write_f64::<LittleEndian>(f.t).expect("vec write");
        for p in f.points() {
            for v in p {
                out.write_f64::<LittleEndian>(*v).expect("vec write");
            }
        }
    }
    Ok((out, has_face))
}

pub(crate) fn decode_clip(gloss_id: &str, bytes: &[u8], frame_count: usize, has_face: bool) -> Result<SignClip, LandmarkError> {
    let per_frame = frame_floats(has_face) * 8;
    if bytes.len() != per_frame * frame_count {
        return Err(LandmarkError::Format(format!(
            "{gloss_id}: {} payload bytes for {frame_count} frames",
            bytes.len()
        )));
    }
    let mut floats = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")));
    let mut next = move || floats.next().expect("length checked");
    let mut out = Vec::with_capacity(frame_count);
    for _ in 0..frame_count {
        let t = next();
        let mut points = |n: usize| -> Vec<Landmark> { (0..n).map(|_| [next(), next(), next()]).collect() };
        let pose = points(POSE_LANDMARKS);
        let left_hand = points(HAND_LANDMARKS);
        let right_hand = points(HAND_LANDMARKS);
        let face = has_face.then(|| points(FACE_LANDMARKS));
        out.push(Keyframe {
            t,
            pose,
            left_hand,
            right_hand,
            face,
        });
    }
    SignClip::new(gloss_id, out).map_err(|e| LandmarkError::Clip(gloss_id.to_owned(), e.to_string()))
}

fn dictionary_version(records: &[ClipRecord]) -> u64 {
    let mut h = Sha256::new();
    for r in records {
        h.update(r.gloss_id.as_bytes());
        h.update([0]);
        h.update(r.checksum);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn write_str(out: &mut Vec<u8>, s: &str) -> Result<(), LandmarkError> {
    let len = u16::try_from(s.len()).map_err(|_| LandmarkError::Format(format!("string too long: {s:.32}...")))?;
    out.write_u16::<LittleEndian>(len).expect("vec write");
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

/// Serialises clips (with their source file names) into dictionary bytes.
/// Entries are sorted by gloss so equal inputs give identical files.
pub fn encode_dictionary(entries: &[(SignClip, String)]) -> Result<(Vec<u8>, Vec<ClipRecord>, u64), LandmarkError> {
    let mut sorted: Vec<&(SignClip, String)> = entries.iter().collect();
    sorted.sort_by(|a, b| a.0.gloss_id.cmp(&b.0.gloss_id));
    let mut payload = Vec::new();
    let mut records = Vec::with_capacity(sorted.len());
    for (clip, source) in sorted {
        let (bytes, has_face) = encode_clip(clip)?;
        records.push(ClipRecord {
            gloss_id: clip.gloss_id.clone(),
            source_file: source.clone(),
            frame_count: clip.frames.len() as u32,
            duration: clip.duration,
            has_face,
            offset: payload.len() as u64,
            len: bytes.len() as u64,
            checksum: Sha256::digest(&bytes).into(),
        });
        payload.extend_from_slice(&bytes);
    }
    let version = dictionary_version(&records);
    let mut out = Vec::with_capacity(payload.len() + 64 * records.len() + 20);
    out.extend_from_slice(MAGIC);
    out.write_u16::<LittleEndian>(FORMAT_VERSION).expect("vec write");
    out.write_u16::<LittleEndian>(FILE_FPS).expect("vec write");
    out.write_u32::<LittleEndian>(records.len() as u32).expect("vec write");
    out.write_u64::<LittleEndian>(version).expect("vec write");
    for r in &records {
        write_str(&mut out, &r.gloss_id)?;
        write_str(&mut out, &r.source_file)?;
        out.write_u32::<LittleEndian>(r.frame_count).expect("vec write");
        out.write_u8(r.has_face as u8).expect("vec write");
        out.write_u64::<LittleEndian>(r.offset).expect("vec write");
        out.write_u64::<LittleEndian>(r.len).expect("vec write");
        out.extend_from_slice(&r.checksum);
    }
    out.extend_from_slice(&payload);
    Ok((out, records, version))
}

fn read_str(cur: &mut Cursor<&[u8]>) -> std::io::Result<String> {
    let len = cur.read_u16::<LittleEndian>()? as usize;
    let mut buf = vec![0; len];
    cur.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

/// Parses header and index; the payload is kept raw (and may be short if
/// the file was truncated).
pub fn decode_dictionary(bytes: &[u8]) -> Result<DictionaryFile, LandmarkError> {
    let truncated = |e: std::io::Error| LandmarkError::Format(format!("truncated header or index: {e}"));
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(LandmarkError::Format("bad magic".into()));
    }
    let mut cur = Cursor::new(bytes);
    cur.set_position(4);
    let version = cur.read_u16::<LittleEndian>().map_err(truncated)?;
    if version != FORMAT_VERSION {
        return Err(LandmarkError::Format(format!("unsupported format version {version}")));
    }
    let fps = cur.read_u16::<LittleEndian>().map_err(truncated)?;
    let count = cur.read_u32::<LittleEndian>().map_err(truncated)?;
    let dictionary_version = cur.read_u64::<LittleEndian>().map_err(truncated)?;
    let mut records = Vec::with_capacity(count.min(100_000) as usize);
    for _ in 0..count {
        let gloss_id = read_str(&mut cur).map_err(truncated)?;
        let source_file = read_str(&mut cur).map_err(truncated)?;
        let frame_count = cur.read_u32::<LittleEndian>().map_err(truncated)?;
        let has_face = cur.read_u8().map_err(truncated)? != 0;
        let offset = cur.read_u64::<LittleEndian>().map_err(truncated)?;
        let len = cur.read_u64::<LittleEndian>().map_err(truncated)?;
        let mut checksum = [0; 32];
        cur.read_exact(&mut checksum).map_err(truncated)?;
        records.push(ClipRecord {
            gloss_id,
            source_file,
            frame_count,
            duration: frame_count.saturating_sub(1) as f64 / fps.max(1) as f64,
            has_face,
            offset,
            len,
            checksum,
        });
    }
    let payload = bytes[cur.position() as usize..].to_vec();
    Ok(DictionaryFile {
        version,
        fps,
        dictionary_version,
        records,
        payload,
    })
}

impl DictionaryFile {
    /// The stored bytes for `record`, if the payload is long enough.
    pub fn entry_bytes(&self, record: &ClipRecord) -> Option<&[u8]> {
        let start = usize::try_from(record.offset).ok()?;
        let end = start.checked_add(usize::try_from(record.len).ok()?)?;
        self.payload.get(start..end)
    }

    pub fn checksum_ok(&self, record: &ClipRecord) -> bool {
        self.entry_bytes(record)
            .is_some_and(|b| <[u8; 32]>::from(Sha256::digest(b)) == record.checksum)
    }

    /// Decodes one entry after verifying its checksum.
    pub fn clip(&self, record: &ClipRecord) -> Result<SignClip, LandmarkError> {
        if !self.checksum_ok(record) {
            return Err(LandmarkError::Format(format!(
                "{}: checksum mismatch or truncated payload",
                record.gloss_id
            )));
        }
        let bytes = self.entry_bytes(record).expect("checked above");
        decode_clip(&record.gloss_id, bytes, record.frame_count as usize, record.has_face)
    }

    pub fn recomputed_version(&self) -> u64 {
        dictionary_version(&self.records)
    }
}

pub fn write_dictionary(path: &Path, entries: &[(SignClip, String)]) -> Result<(Vec<ClipRecord>, u64), LandmarkError> {
    let (bytes, records, version) = encode_dictionary(entries)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| LandmarkError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| LandmarkError::io(path, e))?;
    Ok((records, version))
}

pub fn read_dictionary_file(path: &Path) -> Result<DictionaryFile, LandmarkError> {
    let bytes = std::fs::read(path).map_err(|e| LandmarkError::io(path, e))?;
    decode_dictionary(&bytes)
}

/// Loads a dictionary for serving: every checksum must verify and the
/// fingerspelling alphabet must be complete.
pub fn load_dictionary(path: &Path) -> Result<SignDictionary, LandmarkError> {
    let file = read_dictionary_file(path)?;
    let clips = file.records.iter().map(|r| file.clip(r)).collect::<Result<Vec<_>, _>>()?;
    SignDictionary::new(clips, file.dictionary_version).map_err(|e| match e {
        crate::signgen::SignError::IncompleteFingerspell(missing) => LandmarkError::IncompleteFingerspell(missing),
        other => LandmarkError::Format(other.to_string()),
    })
}

#[derive(Serialize)]
struct ExportEntry<'a> {
    #[serde(flatten)]
    record: &'a ClipRecord,
    frames: Vec<Keyframe>,
}

/// Human-readable dump of a dictionary, frames included.
pub fn export_json(path: &Path) -> Result<serde_json::Value, LandmarkError> {
    let file = read_dictionary_file(path)?;
    let mut entries = Vec::with_capacity(file.records.len());
    for r in &file.records {
        let clip = file.clip(r)?;
        entries.push(
            serde_json::to_value(ExportEntry {
                record: r,
                frames: clip.frames,
            })
            .map_err(|e| LandmarkError::Format(e.to_string()))?,
        );
    }
    Ok(serde_json::json!({
        "format_version": file.version,
        "fps": file.fps,
        "dictionary_version": format!("{:016x}", file.dictionary_version),
        "entry_count": file.records.len(),
        "entries": entries,
    }))
}
