//! Prompt assembly. Every backend receives the same text for a given variant.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ocr::OcrTokenSet;

pub const INSTRUCTIONS: &str = include_str!("../../prompts/instructions.txt");
pub const EXTRACTION_RULES: &str = include_str!("../../prompts/rules.txt");
pub const SCHEMA_TEMPLATE: &str = include_str!("../../prompts/schema_template.txt");
pub const REASONING: &str = include_str!("../../prompts/reasoning.txt");
pub const TRAVERSAL: &str = include_str!("../../prompts/traversal.txt");

pub const OCR_SECTION_START: &str = "=== OCR TEXT ===";
pub const OCR_SECTION_END: &str = "=== END OCR TEXT ===";

/// Default number of candidates drawn for self-consistency.
pub const DEFAULT_CANDIDATES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PromptVariant {
    Baseline,
    OnlyExample,
    ChainOfThought,
    /// Best-of-`k` selection over independent calls; `k >= 2`.
    SelfConsistency {
        k: usize,
    },
    DfsBfs,
}

impl PromptVariant {
    pub fn self_consistency(k: usize) -> Result<Self, String> {
        if k < 2 {
            return Err(format!("self-consistency needs at least 2 candidates, got {k}"));
        }
        Ok(PromptVariant::SelfConsistency { k })
    }

    /// Backend calls per diagram.
    pub fn candidates(self) -> usize {
        match self {
            PromptVariant::SelfConsistency { k } => k,
            _ => 1,
        }
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PromptVariant::Baseline => f.write_str("baseline"),
            PromptVariant::OnlyExample => f.write_str("only-example"),
            PromptVariant::ChainOfThought => f.write_str("cot"),
            PromptVariant::SelfConsistency { k } if *k == DEFAULT_CANDIDATES => f.write_str("self-consistency"),
            PromptVariant::SelfConsistency { k } => write!(f, "self-consistency:{k}"),
            PromptVariant::DfsBfs => f.write_str("dfs-bfs"),
        }
    }
}

impl FromStr for PromptVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase().replace(['_', '+'], "-");
        let (name, k) = match s.split_once(':') {
            Some((name, k)) => (name.to_string(), Some(k.parse::<usize>().map_err(|e| format!("bad candidate count: {e}"))?)),
            None => (s, None),
        };
        match (name.as_str(), k) {
            ("baseline", None) => Ok(PromptVariant::Baseline),
            ("only-example", None) => Ok(PromptVariant::OnlyExample),
            ("cot" | "chain-of-thought", None) => Ok(PromptVariant::ChainOfThought),
            ("self-consistency" | "sc", k) => PromptVariant::self_consistency(k.unwrap_or(DEFAULT_CANDIDATES)),
            ("dfs-bfs" | "bfs-dfs", None) => Ok(PromptVariant::DfsBfs),
            _ => Err(format!("unknown prompt variant '{name}'")),
        }
    }
}

impl TryFrom<String> for PromptVariant {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PromptVariant> for String {
    fn from(v: PromptVariant) -> String {
        v.to_string()
    }
}

fn baseline() -> String {
    format!("{INSTRUCTIONS}\nReturn a JSON object with exactly this structure:\n{SCHEMA_TEMPLATE}\n{EXTRACTION_RULES}")
}

/// Assembles the prompt for a variant, appending an OCR section when tokens are supplied.
pub fn build_prompt(variant: PromptVariant, ocr_tokens: Option<&OcrTokenSet>) -> String {
    let mut prompt = match variant {
        PromptVariant::Baseline => baseline(),
        PromptVariant::OnlyExample => {
            format!("Describe the BPMN diagram in the image as JSON shaped like this example:\n{SCHEMA_TEMPLATE}")
        }
        PromptVariant::ChainOfThought | PromptVariant::SelfConsistency { .. } => format!("{}\n{REASONING}", baseline()),
        PromptVariant::DfsBfs => format!("{}\n{TRAVERSAL}", baseline()),
    };
    if let Some(tokens) = ocr_tokens {
        prompt.push('\n');
        prompt.push_str(OCR_SECTION_START);
        prompt.push_str(
            "\nAn OCR engine read the following text fragments from the same image, one per line. \
             Use them to recover labels you cannot read; they carry no structure.\n",
        );
        for token in &tokens.tokens {
            prompt.push_str("- ");
            prompt.push_str(&token.text.split_whitespace().collect::<Vec<_>>().join(" "));
            prompt.push('\n');
        }
        prompt.push_str(OCR_SECTION_END);
        prompt.push('\n');
    }
    prompt
}

/// Token lines of the OCR section, if the prompt has one.
pub fn ocr_section_lines(prompt: &str) -> Option<Vec<&str>> {
    let start = prompt.find(OCR_SECTION_START)?;
    let end = prompt[start..].find(OCR_SECTION_END)? + start;
    Some(prompt[start..end].lines().filter_map(|l| l.strip_prefix("- ")).collect())
}
