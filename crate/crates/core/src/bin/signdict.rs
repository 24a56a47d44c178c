use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use axs_core::landmark::{self, synth, CompileOptions, DEFAULT_TRIM_THRESHOLD};
use axs_core::Execution;
use clap::{Parser, Subcommand};

/// Build and inspect sign dictionary files.
#[derive(Parser)]
#[command(name = "signdict", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a directory of landmark JSON files into a dictionary.
    Compile {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fail when the fingerspelling alphabet is incomplete.
        #[arg(long)]
        strict: bool,
        #[arg(long, default_value_t = DEFAULT_TRIM_THRESHOLD)]
        trim_threshold: f64,
        /// Process files on the calling thread only.
        #[arg(long)]
        sequential: bool,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Check a dictionary file; exits non-zero on any violation.
    Validate { file: PathBuf },
    /// Dump a dictionary, frames included, as JSON.
    ExportJson {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a deterministic synthetic landmark corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Number of word signs on top of the 36-letter alphabet.
        #[arg(long, default_value_t = 50)]
        words: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Compile {
            input,
            out,
            strict,
            trim_threshold,
            sequential,
            json,
        } => {
            let options = CompileOptions {
                strict,
                trim_threshold,
                execution: if sequential {
                    Execution::Sequential
                } else {
                    Execution::Parallel
                },
            };
            let report =
                landmark::compile_dictionary(&input, &out, options).with_context(|| format!("compiling {}", input.display()))?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!(
                    "wrote {} entries from {} files to {} (version {})",
                    report.entries_written, report.files_seen, report.output, report.dictionary_version
                );
                for f in &report.failures {
                    println!("failed {}: {} {}", f.file, f.code, f.message);
                }
                for w in report.warnings() {
                    println!("warning: {w}");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { file } => {
            let report = landmark::validate_dictionary(&file)?;
            for v in &report.violations {
                println!("{} {}: {}", v.kind, v.entry.as_deref().unwrap_or("-"), v.message);
            }
            println!("{} entries, {} violations", report.entries, report.violations.len());
            Ok(if report.is_valid() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::ExportJson { file, out } => {
            let value = landmark::export_json(&file)?;
            let text = serde_json::to_string_pretty(&value)?;
            match out {
                Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => println!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth { out, words, seed } => {
            let files = synth::write_corpus(&out, &synth::corpus_glosses(words), seed)?;
            println!("wrote {} landmark files to {}", files.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
