//! Directory compilation and artifact validation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::format::{encode_clip, read_dictionary_file, write_dictionary, ClipRecord, FILE_FPS};
use super::process::{process_clip, DEFAULT_TRIM_THRESHOLD};
use super::{parse_landmark_file, LandmarkError, REFERENCE_VOCABULARY_SIZE};
use crate::exec::Execution;
use crate::signgen::{fingerspell_ids, frame_time, SignClip};

#[derive(Debug, Clone, Copy)]
pub struct CompileOptions {
    /// Treat an incomplete fingerspelling alphabet as an error.
    pub strict: bool,
    pub trim_threshold: f64,
    pub execution: Execution,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self {
            strict: false,
            trim_threshold: DEFAULT_TRIM_THRESHOLD,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Duplicate {
    pub gloss_id: String,
    pub kept: String,
    pub replaced: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub file: String,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompileReport {
    pub output: String,
    pub files_seen: usize,
    pub entries_written: usize,
    pub dictionary_version: String,
    pub duplicates: Vec<Duplicate>,
    pub failures: Vec<Failure>,
    pub fingerspell_complete: bool,
    pub missing_fingerspell: Vec<String>,
    /// Sign count of the reference corpus, for comparison only.
    pub reference_vocabulary: usize,
    pub records: Vec<ClipRecord>,
}

impl CompileReport {
    pub fn warnings(&self) -> Vec<String> {
        let mut w: Vec<String> = self
            .duplicates
            .iter()
            .map(|d| format!("duplicate gloss {}: {} replaces {}", d.gloss_id, d.kept, d.replaced))
            .collect();
        if !self.fingerspell_complete {
            w.push(format!(
                "fingerspelling alphabet incomplete, missing {}",
                self.missing_fingerspell.join(", ")
            ));
        }
        if self.entries_written != self.reference_vocabulary {
            w.push(format!(
                "{} entries written; the reference vocabulary has {}",
                self.entries_written, self.reference_vocabulary
            ));
        }
        w
    }
}

fn landmark_files(dir: &Path) -> Result<Vec<PathBuf>, LandmarkError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| LandmarkError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// Compiles every `*.json` landmark file in `input_dir` (sorted by name; a
/// later file wins on duplicate glosses) into a dictionary at `output`.
pub fn compile_dictionary(input_dir: &Path, output: &Path, options: CompileOptions) -> Result<CompileReport, LandmarkError> {
    let files = landmark_files(input_dir)?;
    if files.is_empty() {
        return Err(LandmarkError::NoInputs(input_dir.display().to_string()));
    }
    let results = options.execution.map(&files, |path| {
        let file = parse_landmark_file(path)?;
        let clip = process_clip(&file, options.trim_threshold)?;
        Ok::<_, LandmarkError>((clip, file.source_file))
    });

    let mut entries: BTreeMap<String, (SignClip, String)> = BTreeMap::new();
    let mut duplicates = Vec::new();
    let mut failures = Vec::new();
    for (path, result) in files.iter().zip(results) {
        match result {
            Ok((clip, source)) => {
                if let Some((_, old)) = entries.get(&clip.gloss_id) {
                    tracing::warn!(gloss = %clip.gloss_id, kept = %source, replaced = %old, "duplicate gloss");
                    duplicates.push(Duplicate {
                        gloss_id: clip.gloss_id.clone(),
                        kept: source.clone(),
                        replaced: old.clone(),
                    });
                }
                entries.insert(clip.gloss_id.clone(), (clip, source));
            }
            Err(e) => failures.push(Failure {
                file: path.display().to_string(),
                code: e.code().to_owned(),
                message: e.to_string(),
            }),
        }
    }
    if entries.is_empty() {
        return Err(LandmarkError::NoInputs(input_dir.display().to_string()));
    }
    let missing: Vec<String> = fingerspell_ids().into_iter().filter(|id| !entries.contains_key(id)).collect();
    if options.strict && !missing.is_empty() {
        return Err(LandmarkError::IncompleteFingerspell(missing));
    }
    let entries: Vec<(SignClip, String)> = entries.into_values().collect();
    let (records, version) = write_dictionary(output, &entries)?;
    Ok(CompileReport {
        output: output.display().to_string(),
        files_seen: files.len(),
        entries_written: records.len(),
        dictionary_version: format!("{version:016x}"),
        duplicates,
        failures,
        fingerspell_complete: missing.is_empty(),
        missing_fingerspell: missing,
        reference_vocabulary: REFERENCE_VOCABULARY_SIZE,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Gloss the violation belongs to; `None` for file-level problems.
    pub entry: Option<String>,
    pub kind: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub path: String,
    pub entries: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a dictionary file end to end. Unreadable files are errors; every
/// other problem is listed as a violation.
pub fn validate_dictionary(path: &Path) -> Result<ValidationReport, LandmarkError> {
    let mut report = ValidationReport {
        path: path.display().to_string(),
        entries: 0,
        violations: Vec::new(),
    };
    let file = match read_dictionary_file(path) {
        Ok(f) => f,
        Err(LandmarkError::Format(message)) => {
            report.violations.push(Violation {
                entry: None,
                kind: "header",
                message,
            });
            return Ok(report);
        }
        Err(e) => return Err(e),
    };
    report.entries = file.records.len();
    let mut push = |entry: Option<&str>, kind: &'static str, message: String| {
        report.violations.push(Violation {
            entry: entry.map(str::to_owned),
            kind,
            message,
        });
    };
    if file.fps != FILE_FPS {
        push(None, "fps", format!("header fps {} is not 30", file.fps));
    }
    if file.recomputed_version() != file.dictionary_version {
        push(None, "version", "dictionary version does not match the index".into());
    }
    for r in &file.records {
        let id = Some(r.gloss_id.as_str());
        if !file.checksum_ok(r) {
            push(id, "checksum", "payload checksum mismatch or truncated payload".into());
            continue;
        }
        let clip = match file.clip(r) {
            Ok(c) => c,
            Err(e) => {
                push(id, "landmarks", e.to_string());
                continue;
            }
        };
        if clip.frames.len() < 2 {
            push(id, "frames", format!("{} frames", clip.frames.len()));
        }
        if let Some(k) = clip.frames.iter().enumerate().position(|(k, f)| f.t != frame_time(k, 1.0)) {
            push(id, "timing", format!("frame {k} is off the 30 fps grid"));
        }
        match encode_clip(&clip) {
            Ok((bytes, _)) if Some(bytes.as_slice()) == file.entry_bytes(r) => {}
            _ => push(id, "roundtrip", "re-encoded payload differs from stored bytes".into()),
        }
    }
    for id in fingerspell_ids() {
        if !file.records.iter().any(|r| r.gloss_id == id) {
            push(Some(&id), "fingerspell", format!("alphabet entry {id} missing"));
        }
    }
    Ok(report)
}
