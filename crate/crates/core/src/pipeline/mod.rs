//! Image-to-JSON extraction: encode the image, build the prompt, call the backend, parse the
//! reply and, when OCR tokens are present, fill missing labels.

pub mod backend;
pub mod cache;
pub mod limiter;
pub mod prompt;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    backend_from_config, invoke_backend, Adapter, BackendConfig, BackendError, BackendRequest, ChatCompletionsBackend,
    MockBackend, VisionBackend,
};
pub use cache::{sha256_hex, ResponseCache};
pub use limiter::RateLimiter;
pub use prompt::{build_prompt, PromptVariant};

use crate::ocr::{Enricher, OcrEngine, OcrError, OcrTokenSet};
use crate::schema::{
    normalize_label, normalize_type, parse_response, ExtractedDiagram, ParseOutcome, Strictness, TypeNormalizationTable,
};
use cache::CacheKey;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("image is empty")]
    EmptyImage,
    #[error("no candidates to select from")]
    EmptyCandidates,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("response cache: {0}")]
    Cache(#[from] std::io::Error),
    #[error(transparent)]
    Ocr(#[from] OcrError),
}

/// Standard base64 with padding.
pub fn encode_image(image_bytes: &[u8]) -> Result<String, PipelineError> {
    if image_bytes.is_empty() {
        return Err(PipelineError::EmptyImage);
    }
    Ok(STANDARD.encode(image_bytes))
}

/// How OCR text enters a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum OcrMode {
    None,
    /// Tokens go into every prompt and enrich every parsed reply.
    Always(OcrEngine),
    /// A second call with tokens is made only when the first parse has no events, no
    /// gateways, or no flows.
    OnMiss(OcrEngine),
}

impl OcrMode {
    pub fn engine(self) -> Option<OcrEngine> {
        match self {
            OcrMode::None => None,
            OcrMode::Always(e) | OcrMode::OnMiss(e) => Some(e),
        }
    }
}

impl fmt::Display for OcrMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OcrMode::None => f.write_str("none"),
            OcrMode::Always(e) => write!(f, "always:{e}"),
            OcrMode::OnMiss(e) => write!(f, "on-miss:{e}"),
        }
    }
}

impl FromStr for OcrMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        if s == "none" {
            return Ok(OcrMode::None);
        }
        match s.split_once(':') {
            Some(("always", engine)) => Ok(OcrMode::Always(engine.parse()?)),
            Some(("on-miss" | "onmiss" | "on_miss", engine)) => Ok(OcrMode::OnMiss(engine.parse()?)),
            // A bare engine name means "always".
            None => Ok(OcrMode::Always(s.parse()?)),
            _ => Err(format!("unknown OCR mode '{s}' (expected none, always:<engine> or on-miss:<engine>)")),
        }
    }
}

impl TryFrom<String> for OcrMode {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<OcrMode> for String {
    fn from(m: OcrMode) -> String {
        m.to_string()
    }
}

/// Outcome of extracting one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub diagram_id: String,
    pub backend: String,
    pub prompt_variant: PromptVariant,
    pub ocr_mode: OcrMode,
    /// Whether OCR tokens went into the final prompt.
    pub ocr_applied: bool,
    /// Parsed (and enriched) output, or the unparseable reply.
    pub outcome: ParseOutcome,
    pub raw_response: String,
    /// Backend calls actually made; cache hits excluded.
    pub backend_calls: usize,
    pub latency_secs: f64,
    pub timestamp: DateTime<Utc>,
}

pub const CANDIDATE_DELIMITER: &str = "----- candidate";

/// Set of (canonical type, normalized name) pairs of a diagram's elements.
fn element_signature(diagram: &ExtractedDiagram) -> BTreeSet<(String, String)> {
    let table = TypeNormalizationTable::default();
    diagram
        .elements
        .iter()
        .map(|e| (normalize_type(&e.element_type, &table, Strictness::Strict), normalize_label(&e.name)))
        .collect()
}

fn jaccard(a: &BTreeSet<(String, String)>, b: &BTreeSet<(String, String)>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Index of the parsed candidate with the largest summed Jaccard similarity to the other
/// parsed candidates; lowest index wins ties. Falls back to 0 when nothing parsed.
pub fn most_consistent_index(candidates: &[ParseOutcome]) -> Result<usize, PipelineError> {
    if candidates.is_empty() {
        return Err(PipelineError::EmptyCandidates);
    }
    let signatures: Vec<Option<BTreeSet<(String, String)>>> =
        candidates.iter().map(|c| c.diagram.as_ref().map(element_signature)).collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, sig) in signatures.iter().enumerate() {
        let Some(sig) = sig else { continue };
        let score: f64 = signatures
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .filter_map(|(_, other)| other.as_ref().map(|o| jaccard(sig, o)))
            .sum();
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((i, score));
        }
    }
    Ok(best.map_or(0, |(i, _)| i))
}

pub fn select_most_consistent(candidates: &[ParseOutcome]) -> Result<ParseOutcome, PipelineError> {
    most_consistent_index(candidates).map(|i| candidates[i].clone())
}

/// One image to extract.
#[derive(Clone, Copy)]
pub struct ExtractionJob<'a> {
    pub diagram_id: &'a str,
    pub image: &'a [u8],
    pub variant: PromptVariant,
    pub ocr: Option<&'a OcrTokenSet>,
    pub enricher: Option<&'a dyn Enricher>,
}

/// A backend with its optional response cache and shared rate limiter.
pub struct Extractor<'a> {
    backend: &'a dyn VisionBackend,
    cache: Option<ResponseCache>,
    limiter: &'a RateLimiter,
}

impl<'a> Extractor<'a> {
    pub fn new(backend: &'a dyn VisionBackend, cache: Option<ResponseCache>, limiter: &'a RateLimiter) -> Self {
        Extractor { backend, cache, limiter }
    }

    fn call(
        &self,
        job: &ExtractionJob<'_>,
        prompt: &str,
        image_b64: &str,
        image_hash: &str,
        candidate: usize,
        calls: &mut usize,
    ) -> Result<String, PipelineError> {
        let prompt_hash = sha256_hex(prompt.as_bytes());
        let variant = job.variant.to_string();
        let key = CacheKey {
            backend: self.backend.name(),
            image_hash,
            prompt_hash: &prompt_hash,
            variant: &variant,
            candidate: matches!(job.variant, PromptVariant::SelfConsistency { .. }).then_some(candidate),
        };
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            return Ok(hit);
        }
        let response = {
            let _permit = self.limiter.acquire();
            self.backend.complete(&BackendRequest { diagram_id: job.diagram_id, prompt, image_base64: image_b64, candidate })?
        };
        *calls += 1;
        if let Some(cache) = &self.cache {
            cache.put(&key, &response)?;
        }
        Ok(response)
    }

    /// Encode, prompt, invoke, parse, and enrich when the reply parsed and tokens are present.
    /// Self-consistency makes `k` calls and keeps the most consistent parse.
    pub fn run_extraction(&self, job: &ExtractionJob<'_>) -> Result<ExtractionRecord, PipelineError> {
        let started = Instant::now();
        let image_b64 = encode_image(job.image)?;
        let image_hash = sha256_hex(job.image);
        let prompt = build_prompt(job.variant, job.ocr);
        let mut calls = 0;

        let (outcome, raw_response) = match job.variant {
            PromptVariant::SelfConsistency { k } => {
                let mut raws = Vec::with_capacity(k);
                for candidate in 0..k {
                    raws.push(self.call(job, &prompt, &image_b64, &image_hash, candidate, &mut calls)?);
                }
                let parsed: Vec<ParseOutcome> = raws.iter().map(|r| parse_response(r)).collect();
                let chosen = most_consistent_index(&parsed)?;
                let combined = raws
                    .iter()
                    .enumerate()
                    .map(|(i, r)| format!("{CANDIDATE_DELIMITER} {i} -----\n{r}"))
                    .collect::<Vec<_>>()
                    .join("\n");
                (parsed[chosen].clone(), combined)
            }
            _ => {
                let raw = self.call(job, &prompt, &image_b64, &image_hash, 0, &mut calls)?;
                (parse_response(&raw), raw)
            }
        };

        let outcome = match (outcome.diagram.clone(), job.ocr, job.enricher) {
            (Some(diagram), Some(tokens), Some(enricher)) => {
                ParseOutcome::parsed(enricher.enrich(diagram, tokens), outcome.raw_text)
            }
            _ => outcome,
        };

        Ok(ExtractionRecord {
            diagram_id: job.diagram_id.to_string(),
            backend: self.backend.name().to_string(),
            prompt_variant: job.variant,
            ocr_mode: match job.ocr {
                Some(t) => OcrMode::Always(t.engine),
                None => OcrMode::None,
            },
            ocr_applied: job.ocr.is_some(),
            outcome,
            raw_response,
            backend_calls: calls,
            latency_secs: started.elapsed().as_secs_f64(),
            timestamp: Utc::now(),
        })
    }

    /// Runs a job under an OCR mode. `tokens` is called at most once, and only when the mode
    /// needs OCR text: before the call for `Always`, after a missed first parse for `OnMiss`.
    pub fn run_with_mode<F>(&self, job: &ExtractionJob<'_>, mode: OcrMode, tokens: F) -> Result<ExtractionRecord, PipelineError>
    where
        F: FnOnce() -> Result<OcrTokenSet, OcrError>,
    {
        let bare = ExtractionJob { ocr: None, ..*job };
        let mut record = match mode {
            OcrMode::None => self.run_extraction(&bare)?,
            OcrMode::Always(_) => {
                let tokens = tokens()?;
                self.run_extraction(&ExtractionJob { ocr: Some(&tokens), ..*job })?
            }
            OcrMode::OnMiss(_) => {
                let first = self.run_extraction(&bare)?;
                if misses_key_components(&first.outcome) {
                    let tokens = tokens()?;
                    let mut second = self.run_extraction(&ExtractionJob { ocr: Some(&tokens), ..*job })?;
                    second.backend_calls += first.backend_calls;
                    second.latency_secs += first.latency_secs;
                    second
                } else {
                    first
                }
            }
        };
        record.ocr_mode = mode;
        Ok(record)
    }
}

/// True when the parse lacks any event, any gateway, or any flow (unparseable counts as missing all).
pub fn misses_key_components(outcome: &ParseOutcome) -> bool {
    let Some(d) = &outcome.diagram else { return true };
    let table = TypeNormalizationTable::default();
    let has_family =
        |family: &str| d.elements.iter().any(|e| normalize_type(&e.element_type, &table, Strictness::Relaxed) == family);
    !has_family("event") || !has_family("gateway") || d.flows.is_empty()
}
