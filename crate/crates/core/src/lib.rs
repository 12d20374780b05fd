//! Extraction of BPMN process models from diagram images with vision-language models,
//! and scoring of the extractions against BPMN 2.0 XML gold standards.

pub mod eval;
pub mod gold;
pub mod ocr;
pub mod pipeline;
pub mod schema;
pub mod stats;

pub mod commands;
pub mod config;
pub mod corpus;
