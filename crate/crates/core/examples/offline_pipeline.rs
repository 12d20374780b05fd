//! The whole pipeline offline: split, gold, extract with the replay backend (vision-only and
//! OCR on miss), evaluate, errors, stats and report.
//!
//! ```text
//! cargo run --example offline_pipeline [out_dir]
//! ```
//!
//! The replay backend answers from `fixtures/mock/<id>.txt`, or `<id>.ocr.txt` when the prompt
//! carries OCR text. One of the canned replies is prose only and scores as an empty diagram.

use std::path::{Path, PathBuf};

use bpmnx::commands::{self, CompareBy, EvalOptions, RunKey, RunSpec, StatsSpec};
use bpmnx::config::Config;
use bpmnx::ocr::OcrEngine;
use bpmnx::pipeline::{OcrMode, PromptVariant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("bpmnx-offline"));
    if out.exists() {
        std::fs::remove_dir_all(&out)?;
    }

    let manifest = commands::cmd_split(&fixtures.join("corpus"), 42, &out)?;
    let (train, dev, test) = manifest.counts();
    println!("split: train {train}, dev {dev}, test {test}");

    let gold_dir = out.join("gold");
    let gold = commands::cmd_gold(&manifest, None, &gold_dir)?;
    println!("gold: {} diagrams", gold.written.len());

    let config = Config { mock_dir: Some(fixtures.join("mock")), ..Config::default() };
    let mut record_dirs = Vec::new();
    for ocr_mode in [OcrMode::None, OcrMode::OnMiss(OcrEngine::File)] {
        let key = RunKey { backend: "mock".into(), ocr_mode: ocr_mode.to_string(), prompt_variant: "baseline".into() };
        let run = RunSpec {
            backend: "mock".into(),
            prompt_variant: PromptVariant::Baseline,
            ocr_mode,
            split: None,
            output_dir: out.join("records").join(key.slug()),
        };
        let s = commands::cmd_extract(&config, &run, &manifest)?;
        println!("extract {key}: {} records, {} unparseable, {} calls", s.records.len(), s.unparseable.len(), s.backend_calls);
        record_dirs.push(run.output_dir);
    }

    let eval = commands::cmd_evaluate(&record_dirs, &gold_dir, &EvalOptions::default(), &out.join("eval"))?;
    for run in &eval.report.runs {
        println!("evaluate {}: overall F1 {:.3}", run.key, run.overall.f1);
    }
    let errors = commands::cmd_errors(&record_dirs, &gold_dir, &config.type_table()?, 10, &out.join("errors"))?;
    let spec = StatsSpec { by: CompareBy::Ocr, baseline: None };
    let stats = commands::cmd_stats(&[out.join("eval").join(commands::AGGREGATE_FILE)], &spec, &out.join("stats"))?;
    commands::cmd_report(&eval.report, Some(&stats), Some(&errors.rows), &out)?;
    println!("report: {}", out.join(commands::REPORT_FILE).display());
    Ok(())
}
