//! File-in, file-out implementations of the `bpmnx` subcommands.
//!
//! Each stage reads what the previous one wrote, so a run can be resumed or redone from any
//! point: `split` → `gold` → `extract` → `evaluate` / `errors` → `stats` → `report`.

mod corpus;
mod evaluate;
mod extract;
mod report;
mod stats;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use corpus::{cmd_gold, cmd_split, gold_paths, load_gold, GoldSummary, MANIFEST_FILE};
pub use evaluate::{
    cmd_errors, cmd_evaluate, load_aggregate, load_errors, load_records, AggregateReport, ErrorsSummary, EvalOptions,
    EvaluateSummary, RunAggregate, SettingResult, AGGREGATE_FILE, ERRORS_CSV, ERRORS_JSON, OVERALL_LABEL, PER_DIAGRAM_DIR,
};
pub use extract::{cmd_extract, extract_with_backend, ExtractSummary, RunSpec};
pub use report::{cmd_report, render_report, REPORT_FILE};
pub use stats::{
    cmd_stats, compute_stats, load_stats, CompareBy, FriedmanRow, PairwiseRow, RankRow, StatsReport, StatsSpec, STATS_JSON,
};

use crate::config::ConfigError;
use crate::corpus::CorpusError;
use crate::gold::GoldError;
use crate::pipeline::ExtractionRecord;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("record '{diagram_id}' has no gold standard in {gold_dir}")]
    MissingGold { diagram_id: String, gold_dir: PathBuf },
    #[error("gold standard '{diagram_id}': {source}")]
    Gold { diagram_id: String, source: GoldError },
    #[error("{0}")]
    Invalid(String),
}

impl CommandError {
    /// 1 for configuration and usage problems, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) | CommandError::Invalid(_) => 1,
            _ => 2,
        }
    }
}

/// A per-file problem that was recorded and skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub item: String,
    pub error: String,
}

impl Failure {
    pub fn new(item: impl Into<String>, error: impl ToString) -> Self {
        Failure { item: item.into(), error: error.to_string() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.item, self.error)
    }
}

/// Identifies one pipeline configuration: which backend, OCR mode and prompt produced a record.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RunKey {
    pub backend: String,
    pub ocr_mode: String,
    pub prompt_variant: String,
}

impl RunKey {
    pub fn of(record: &ExtractionRecord) -> Self {
        RunKey {
            backend: record.backend.clone(),
            ocr_mode: record.ocr_mode.to_string(),
            prompt_variant: record.prompt_variant.to_string(),
        }
    }

    /// File-name-safe form, e.g. `gpt-4o__on-miss-tesseract__baseline`.
    pub fn slug(&self) -> String {
        let clean = |s: &str| -> String {
            s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '-' }).collect()
        };
        format!("{}__{}__{}", clean(&self.backend), clean(&self.ocr_mode), clean(&self.prompt_variant))
    }
}

impl fmt::Display for RunKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.backend, self.ocr_mode, self.prompt_variant)
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CommandError + '_ {
    move |source| CommandError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CommandError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_error(parent))?;
    }
    std::fs::write(path, contents).map_err(io_error(path))
}

fn read_to_string(path: &Path) -> Result<String, CommandError> {
    std::fs::read_to_string(path).map_err(io_error(path))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize") + "\n"
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn fmt3(x: f64) -> String {
    format!("{x:.3}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), fmt3)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs_are_path_safe() {
        let key = RunKey {
            backend: "gpt 4o".into(),
            ocr_mode: "on-miss:tesseract".into(),
            prompt_variant: "self-consistency:3".into(),
        };
        assert_eq!(key.slug(), "gpt-4o__on-miss-tesseract__self-consistency-3");
        assert_eq!(key.to_string(), "gpt 4o/on-miss:tesseract/self-consistency:3");
    }

    #[test]
    fn csv_helper_quotes() {
        let bytes = csv_bytes(&["a", "b"], [vec!["x,y".to_string(), "z".to_string()]]);
        assert_eq!(String::from_utf8(bytes).unwrap(), "a,b\n\"x,y\",z\n");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CommandError::Invalid("x".into()).exit_code(), 1);
        assert_eq!(CommandError::MissingGold { diagram_id: "d".into(), gold_dir: "g".into() }.exit_code(), 2);
    }
}
