//! Landmark ingestion and the binary sign dictionary.
//!
//! Per-video holistic landmark extractions (JSON) are normalised into
//! shoulder-relative signing space, resampled to 30 fps, trimmed of idle
//! lead-in and lead-out, and packed into a checksummed dictionary file.

mod compile;
mod format;
mod parse;
mod process;
pub mod synth;

use thiserror::Error;

pub use compile::{
    compile_dictionary, validate_dictionary, CompileOptions, CompileReport, Duplicate, Failure, ValidationReport, Violation,
};
pub use format::{
    decode_dictionary, encode_dictionary, export_json, load_dictionary, read_dictionary_file, write_dictionary, ClipRecord,
    DictionaryFile, FORMAT_VERSION, MAGIC,
};
pub use parse::{parse_landmark_file, parse_landmark_str, Coords, LandmarkFile, RawLandmarkFrame};
pub use process::{
    normalize_frames, normalize_keyframes, process_clip, resample_30fps, trim_idle, DEFAULT_TRIM_THRESHOLD, FACE_SUBSET,
    LEFT_SHOULDER, LEFT_WRIST, RIGHT_SHOULDER, RIGHT_WRIST,
};

/// Vocabulary size of the reference sign corpus; compile reports compare
/// against it but never require it.
pub const REFERENCE_VOCABULARY_SIZE: usize = 750;

pub const RAW_FACE_LANDMARKS: usize = 468;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LandmarkError {
    #[error("{path}: {message}{}", frame.map(|f| format!(" (frame {f})")).unwrap_or_default())]
    Parse {
        path: String,
        frame: Option<usize>,
        message: String,
    },
    #[error("{path} frame {frame}: {part} has {got} landmarks, expected {expected}")]
    WrongLandmarkCount {
        path: String,
        frame: usize,
        part: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("frame {frame}: shoulders coincide")]
    DegeneratePose { frame: usize },
    #[error("clip spans {span}s, shorter than one 30 fps frame")]
    TooShort { span: f64 },
    #[error("no landmark files in {0}")]
    NoInputs(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("fingerspelling alphabet incomplete, missing {0:?}")]
    IncompleteFingerspell(Vec<String>),
    #[error("dictionary format: {0}")]
    Format(String),
    #[error("clip {0} rejected: {1}")]
    Clip(String, String),
}

impl LandmarkError {
    pub fn code(&self) -> &'static str {
        match self {
            LandmarkError::Parse { .. } => "PARSE_ERROR",
            LandmarkError::WrongLandmarkCount { .. } => "WRONG_LANDMARK_COUNT",
            LandmarkError::DegeneratePose { .. } => "DEGENERATE_POSE",
            LandmarkError::TooShort { .. } => "TOO_SHORT",
            LandmarkError::NoInputs(_) => "NO_INPUTS",
            LandmarkError::Io { .. } => "IO_ERROR",
            LandmarkError::IncompleteFingerspell(_) => "INCOMPLETE_FINGERSPELL_SET",
            LandmarkError::Format(_) => "FORMAT_ERROR",
            LandmarkError::Clip(..) => "INVALID_CLIP",
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        LandmarkError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}
