use std::path::{Path, PathBuf};

use super::{io_error, write_file, CommandError, Failure};
use crate::corpus::{split_corpus, CorpusManifest, Split};
use crate::gold::{csv_to_gold, gold_to_csv, parse_bpmn_xml, GoldStandard};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Pairs and splits `corpus_dir`, writing `manifest.json` into `out_dir`.
pub fn cmd_split(corpus_dir: &Path, seed: u64, out_dir: &Path) -> Result<CorpusManifest, CommandError> {
    let manifest = split_corpus(corpus_dir, seed)?;
    write_file(&out_dir.join(MANIFEST_FILE), manifest.to_json() + "\n")?;
    Ok(manifest)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GoldSummary {
    pub written: Vec<String>,
    pub failures: Vec<Failure>,
}

pub fn gold_paths(gold_dir: &Path, diagram_id: &str) -> (PathBuf, PathBuf) {
    (gold_dir.join(format!("{diagram_id}.elements.csv")), gold_dir.join(format!("{diagram_id}.relations.csv")))
}

/// Writes `<id>.elements.csv` and `<id>.relations.csv` per manifest entry, skipping files that
/// fail to parse.
pub fn cmd_gold(manifest: &CorpusManifest, split: Option<Split>, out_dir: &Path) -> Result<GoldSummary, CommandError> {
    let mut summary = GoldSummary::default();
    for entry in manifest.entries.iter().filter(|e| split.is_none_or(|s| e.split == s)) {
        let gold = match std::fs::read(&entry.bpmn_path) {
            Ok(bytes) => parse_bpmn_xml(&bytes, &entry.diagram_id),
            Err(e) => {
                summary.failures.push(Failure::new(&entry.diagram_id, format!("{}: {e}", entry.bpmn_path.display())));
                continue;
            }
        };
        match gold {
            Ok(gold) => {
                let (elements, relations) = gold_to_csv(&gold);
                let (ep, rp) = gold_paths(out_dir, &entry.diagram_id);
                write_file(&ep, elements)?;
                write_file(&rp, relations)?;
                summary.written.push(entry.diagram_id.clone());
            }
            Err(e) => summary.failures.push(Failure::new(&entry.diagram_id, e)),
        }
    }
    Ok(summary)
}

pub fn load_gold(gold_dir: &Path, diagram_id: &str) -> Result<GoldStandard, CommandError> {
    let (ep, rp) = gold_paths(gold_dir, diagram_id);
    if !ep.is_file() || !rp.is_file() {
        return Err(CommandError::MissingGold { diagram_id: diagram_id.to_string(), gold_dir: gold_dir.to_path_buf() });
    }
    let elements = std::fs::read(&ep).map_err(io_error(&ep))?;
    let relations = std::fs::read(&rp).map_err(io_error(&rp))?;
    csv_to_gold(&elements, &relations, diagram_id)
        .map_err(|source| CommandError::Gold { diagram_id: diagram_id.to_string(), source })
}
