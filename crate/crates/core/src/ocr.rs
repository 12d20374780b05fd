//! OCR token acquisition and label enrichment.
//!
//! Tokens come either from running `tesseract` in TSV mode or from a sidecar token file
//! written beforehand by any engine (`<image-stem>.<engine>.tokens.tsv`). Sidecar lines are
//! tab-separated `text[\tx\ty\tw\th[\tconf]]`; an optional header line starting with `text`
//! is skipped.

use std::collections::HashSet;
use std::fmt;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{normalize_label, BBox, ExtractedDiagram};

/// Default fraction of an element's width/height added on each side when matching token boxes.
pub const DEFAULT_BBOX_MARGIN: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OcrEngine {
    Tesseract,
    Pix2Struct,
    RapidOcr,
    File,
}

impl OcrEngine {
    pub fn as_str(self) -> &'static str {
        match self {
            OcrEngine::Tesseract => "tesseract",
            OcrEngine::Pix2Struct => "pix2struct",
            OcrEngine::RapidOcr => "rapidocr",
            OcrEngine::File => "file",
        }
    }
}

impl fmt::Display for OcrEngine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OcrEngine {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tesseract" => Ok(OcrEngine::Tesseract),
            "pix2struct" => Ok(OcrEngine::Pix2Struct),
            "rapidocr" => Ok(OcrEngine::RapidOcr),
            "file" => Ok(OcrEngine::File),
            other => Err(format!("unknown OCR engine '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrToken {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl OcrToken {
    pub fn text(text: impl Into<String>) -> Self {
        OcrToken { text: text.into(), bbox: None, confidence: None }
    }

    pub fn boxed(text: impl Into<String>, bbox: BBox) -> Self {
        OcrToken { text: text.into(), bbox: Some(bbox), confidence: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrTokenSet {
    pub engine: OcrEngine,
    pub tokens: Vec<OcrToken>,
}

impl OcrTokenSet {
    /// Builds a set, dropping tokens whose text is blank.
    pub fn new(engine: OcrEngine, tokens: impl IntoIterator<Item = OcrToken>) -> Self {
        OcrTokenSet { engine, tokens: tokens.into_iter().filter(|t| !t.text.trim().is_empty()).collect() }
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum OcrError {
    #[error("OCR engine '{engine}' unavailable: {reason}")]
    EngineUnavailable { engine: String, reason: String },
    #[error("OCR engine '{engine}' failed with {status}: {stderr}")]
    EngineFailed { engine: String, status: String, stderr: String },
    #[error("bad token file {path}: {reason}")]
    BadTokenFile { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcrConfig {
    pub tesseract_command: String,
    /// Arguments after the image path.
    pub tesseract_args: Vec<String>,
    /// Where sidecar token files live; defaults to the image's directory.
    pub sidecar_dir: Option<PathBuf>,
    pub bbox_margin: f64,
}

impl Default for OcrConfig {
    fn default() -> Self {
        OcrConfig {
            tesseract_command: "tesseract".into(),
            tesseract_args: ["stdout", "-l", "eng", "tsv"].map(String::from).to_vec(),
            sidecar_dir: None,
            bbox_margin: DEFAULT_BBOX_MARGIN,
        }
    }
}

pub fn sidecar_path(image_path: &Path, engine: OcrEngine, config: &OcrConfig) -> PathBuf {
    let stem = image_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let dir = config.sidecar_dir.clone().unwrap_or_else(|| image_path.parent().map(Path::to_path_buf).unwrap_or_default());
    dir.join(format!("{stem}.{engine}.tokens.tsv"))
}

/// Runs tesseract for [`OcrEngine::Tesseract`]; every other engine reads its sidecar file.
pub fn acquire_tokens(image_path: &Path, engine: OcrEngine, config: &OcrConfig) -> Result<OcrTokenSet, OcrError> {
    match engine {
        OcrEngine::Tesseract => run_tesseract(image_path, config),
        _ => {
            let path = sidecar_path(image_path, engine, config);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| OcrError::BadTokenFile { path: path.display().to_string(), reason: e.to_string() })?;
            parse_token_file(&text, engine).map_err(|reason| OcrError::BadTokenFile { path: path.display().to_string(), reason })
        }
    }
}

fn run_tesseract(image_path: &Path, config: &OcrConfig) -> Result<OcrTokenSet, OcrError> {
    let engine = "tesseract".to_string();
    let output = Command::new(&config.tesseract_command).arg(image_path).args(&config.tesseract_args).output().map_err(|e| {
        match e.kind() {
            ErrorKind::NotFound | ErrorKind::PermissionDenied => {
                OcrError::EngineUnavailable { engine: engine.clone(), reason: e.to_string() }
            }
            _ => OcrError::EngineFailed { engine: engine.clone(), status: "spawn error".into(), stderr: e.to_string() },
        }
    })?;
    if !output.status.success() {
        return Err(OcrError::EngineFailed {
            engine,
            status: output.status.to_string(),
            stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
        });
    }
    Ok(OcrTokenSet::new(OcrEngine::Tesseract, parse_tesseract_tsv(&String::from_utf8_lossy(&output.stdout))))
}

/// Word rows (level 5) of tesseract TSV output. Confidence is rescaled from 0–100 to 0–1;
/// negative confidences (non-word rows) become `None`.
pub fn parse_tesseract_tsv(tsv: &str) -> Vec<OcrToken> {
    const WORD_LEVEL: &str = "5";
    tsv.lines()
        .skip(1)
        .filter_map(|line| {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 12 || cols[0].trim() != WORD_LEVEL {
                return None;
            }
            let text = cols[11..].join("\t").trim().to_string();
            if text.is_empty() {
                return None;
            }
            let num = |i: usize| cols[i].trim().parse::<f64>().ok();
            let bbox = match (num(6), num(7), num(8), num(9)) {
                (Some(x), Some(y), Some(w), Some(h)) => BBox::new(x, y, w, h),
                _ => None,
            };
            let confidence = num(10).filter(|c| *c >= 0.0).map(|c| (c / 100.0).min(1.0));
            Some(OcrToken { text, bbox, confidence })
        })
        .collect()
}

/// Parses a sidecar token file.
pub fn parse_token_file(text: &str, engine: OcrEngine) -> Result<OcrTokenSet, String> {
    let mut tokens = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || (i == 0 && line.split('\t').next() == Some("text") && line.contains('\t')) {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let num =
            |j: usize| cols[j].trim().parse::<f64>().map_err(|_| format!("line {}: column {} is not a number", i + 1, j + 1));
        let token = match cols.len() {
            1 => OcrToken::text(cols[0].trim()),
            5 | 6 => {
                let bbox = BBox::new(num(1)?, num(2)?, num(3)?, num(4)?).ok_or_else(|| format!("line {}: invalid box", i + 1))?;
                let confidence = if cols.len() == 6 {
                    let c = num(5)?;
                    if !(0.0..=1.0).contains(&c) {
                        return Err(format!("line {}: confidence {c} outside [0, 1]", i + 1));
                    }
                    Some(c)
                } else {
                    None
                };
                OcrToken { text: cols[0].trim().to_string(), bbox: Some(bbox), confidence }
            }
            n => return Err(format!("line {}: expected 1, 5 or 6 columns, found {n}", i + 1)),
        };
        tokens.push(token);
    }
    Ok(OcrTokenSet::new(engine, tokens))
}

/// Hook applied to parsed output when OCR tokens are available.
pub trait Enricher: Send + Sync {
    fn enrich(&self, diagram: ExtractedDiagram, tokens: &OcrTokenSet) -> ExtractedDiagram;
}

/// Fills empty element names from OCR tokens, geometrically when boxes exist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelEnricher {
    pub margin: f64,
}

impl Default for LabelEnricher {
    fn default() -> Self {
        LabelEnricher { margin: DEFAULT_BBOX_MARGIN }
    }
}

impl Enricher for LabelEnricher {
    fn enrich(&self, diagram: ExtractedDiagram, tokens: &OcrTokenSet) -> ExtractedDiagram {
        enrich_with_margin(diagram, tokens, self.margin)
    }
}

/// [`enrich_with_margin`] at the default 10% margin.
pub fn enrich(diagram: ExtractedDiagram, tokens: &OcrTokenSet) -> ExtractedDiagram {
    enrich_with_margin(diagram, tokens, DEFAULT_BBOX_MARGIN)
}

/// Assigns names to elements whose normalized name is empty, in element order.
///
/// An element with a box, when any token has a box, takes the unconsumed boxed tokens whose
/// centers fall inside its box grown by `margin`, joined in reading order. Otherwise it takes
/// the first unconsumed token whose text differs from every current element name. Tokens are
/// used at most once. Named elements, types, boxes and flows are never touched.
pub fn enrich_with_margin(mut diagram: ExtractedDiagram, tokens: &OcrTokenSet, margin: f64) -> ExtractedDiagram {
    let mut consumed = vec![false; tokens.tokens.len()];
    let any_boxed = tokens.tokens.iter().any(|t| t.bbox.is_some());
    let mut taken_names: HashSet<String> =
        diagram.elements.iter().map(|e| normalize_label(&e.name)).filter(|n| !n.is_empty()).collect();

    for element in diagram.elements.iter_mut() {
        if !normalize_label(&element.name).is_empty() {
            continue;
        }
        let assigned = match element.bbox {
            Some(bbox) if any_boxed => {
                let region = bbox.expanded(margin);
                let inside: Vec<usize> = (0..tokens.tokens.len())
                    .filter(|&i| !consumed[i])
                    .filter(|&i| tokens.tokens[i].bbox.is_some_and(|b| region.contains_point(b.center())))
                    .collect();
                if inside.is_empty() {
                    None
                } else {
                    let ordered = reading_order(&inside, tokens);
                    for &i in &ordered {
                        consumed[i] = true;
                    }
                    Some(ordered.iter().map(|&i| tokens.tokens[i].text.trim()).collect::<Vec<_>>().join(" "))
                }
            }
            _ => (0..tokens.tokens.len())
                .find(|&i| !consumed[i] && !taken_names.contains(&normalize_label(&tokens.tokens[i].text)))
                .map(|i| {
                    consumed[i] = true;
                    tokens.tokens[i].text.trim().to_string()
                }),
        };
        if let Some(name) = assigned {
            taken_names.insert(normalize_label(&name));
            element.name = name;
        }
    }
    diagram
}

/// Orders boxed tokens top-to-bottom by line, then left-to-right within a line. A token joins
/// the current line when its vertical center is within half a line height of the line's first token.
fn reading_order(indices: &[usize], tokens: &OcrTokenSet) -> Vec<usize> {
    let boxes: Vec<(usize, BBox)> = indices.iter().filter_map(|&i| tokens.tokens[i].bbox.map(|b| (i, b))).collect();
    let mut by_y = boxes.clone();
    by_y.sort_by(|a, b| a.1.center().1.total_cmp(&b.1.center().1).then(a.1.x.total_cmp(&b.1.x)));
    let mut lines: Vec<Vec<(usize, BBox)>> = Vec::new();
    for item in by_y {
        match lines.last_mut() {
            Some(line) if (item.1.center().1 - line[0].1.center().1).abs() <= line[0].1.height.min(item.1.height) / 2.0 => {
                line.push(item)
            }
            _ => lines.push(vec![item]),
        }
    }
    lines
        .into_iter()
        .flat_map(|mut line| {
            line.sort_by(|a, b| a.1.x.total_cmp(&b.1.x));
            line.into_iter().map(|(i, _)| i)
        })
        .collect()
}
