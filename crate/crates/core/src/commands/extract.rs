use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{to_json, write_file, CommandError, Failure};
use crate::config::{Config, ConfigError};
use crate::corpus::{CorpusManifest, ManifestEntry, Split};
use crate::ocr::{acquire_tokens, LabelEnricher, OcrConfig};
use crate::pipeline::{
    backend_from_config, Adapter, ExtractionJob, ExtractionRecord, Extractor, OcrMode, PromptVariant, RateLimiter, ResponseCache,
    VisionBackend,
};

/// What to run and where to put the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub backend: String,
    pub prompt_variant: PromptVariant,
    pub ocr_mode: OcrMode,
    /// `None` runs every manifest entry.
    pub split: Option<Split>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtractSummary {
    /// Diagram ids with a record on disk, in manifest order.
    pub records: Vec<String>,
    pub unparseable: Vec<String>,
    pub failures: Vec<Failure>,
    pub backend_calls: usize,
}

/// Resolves the backend from `config` and extracts every selected manifest entry into
/// `<output_dir>/<diagram_id>.json`.
pub fn cmd_extract(config: &Config, run: &RunSpec, manifest: &CorpusManifest) -> Result<ExtractSummary, CommandError> {
    let backend_config = config.backend(&run.backend)?;
    backend_config.validate().map_err(ConfigError::Invalid)?;
    if backend_config.adapter == Adapter::ChatCompletions && std::env::var_os(&backend_config.api_key_env).is_none() {
        return Err(ConfigError::Invalid(format!(
            "backend '{}' needs the API key variable '{}'",
            backend_config.name, backend_config.api_key_env
        ))
        .into());
    }
    let backend = backend_from_config(&backend_config).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let limiter = RateLimiter::new(backend_config.max_concurrent, backend_config.requests_per_minute);
    let cache = config.cache_dir.as_ref().map(ResponseCache::new);
    extract_with_backend(backend.as_ref(), cache, &limiter, &config.ocr, run, manifest)
}

/// Extraction over an already-built backend. Diagrams run concurrently, one worker per limiter
/// slot; per-diagram failures are collected rather than returned.
pub fn extract_with_backend(
    backend: &dyn VisionBackend,
    cache: Option<ResponseCache>,
    limiter: &RateLimiter,
    ocr: &OcrConfig,
    run: &RunSpec,
    manifest: &CorpusManifest,
) -> Result<ExtractSummary, CommandError> {
    let entries: Vec<&ManifestEntry> = manifest.entries.iter().filter(|e| run.split.is_none_or(|s| e.split == s)).collect();
    std::fs::create_dir_all(&run.output_dir).map_err(super::io_error(&run.output_dir))?;

    let extractor = Extractor::new(backend, cache, limiter);
    let enricher = LabelEnricher { margin: ocr.bbox_margin };
    let next = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<ExtractionRecord, String>)>> = Mutex::new(Vec::new());
    let workers = limiter.max_concurrent().min(entries.len()).max(1);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(entry) = entries.get(i) else { break };
                let result = extract_one(&extractor, &enricher, ocr, run, entry)
                    .and_then(|record| write_record(&run.output_dir, &record).map(|()| record));
                let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                match &result {
                    Ok(r) if r.outcome.is_parsed() => eprintln!("[{n}/{}] {}: parsed", entries.len(), entry.diagram_id),
                    Ok(_) => eprintln!("[{n}/{}] {}: unparseable", entries.len(), entry.diagram_id),
                    Err(e) => eprintln!("[{n}/{}] {}: failed: {e}", entries.len(), entry.diagram_id),
                }
                results.lock().unwrap().push((i, result));
            });
        }
    });

    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(i, _)| *i);
    let mut summary = ExtractSummary::default();
    for (i, result) in results {
        let id = &entries[i].diagram_id;
        match result {
            Ok(record) => {
                summary.backend_calls += record.backend_calls;
                if !record.outcome.is_parsed() {
                    summary.unparseable.push(id.clone());
                }
                summary.records.push(id.clone());
            }
            Err(e) => summary.failures.push(Failure::new(id, e)),
        }
    }
    if !summary.failures.is_empty() {
        eprintln!("{} of {} diagrams failed:", summary.failures.len(), entries.len());
        for f in &summary.failures {
            eprintln!("  {f}");
        }
    }
    Ok(summary)
}

fn extract_one(
    extractor: &Extractor<'_>,
    enricher: &LabelEnricher,
    ocr: &OcrConfig,
    run: &RunSpec,
    entry: &ManifestEntry,
) -> Result<ExtractionRecord, String> {
    let image = std::fs::read(&entry.image_path).map_err(|e| format!("{}: {e}", entry.image_path.display()))?;
    let job = ExtractionJob {
        diagram_id: &entry.diagram_id,
        image: &image,
        variant: run.prompt_variant,
        ocr: None,
        enricher: Some(enricher),
    };
    let tokens = || match run.ocr_mode.engine() {
        Some(engine) => acquire_tokens(&entry.image_path, engine, ocr),
        None => unreachable!("tokens are only requested by OCR modes"),
    };
    extractor.run_with_mode(&job, run.ocr_mode, tokens).map_err(|e| e.to_string())
}

fn write_record(dir: &Path, record: &ExtractionRecord) -> Result<(), String> {
    write_file(&dir.join(format!("{}.json", record.diagram_id)), to_json(record)).map_err(|e| e.to_string())
}
