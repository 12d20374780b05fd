//! Parse a BPMN file into its element and relation tables.
//!
//! ```text
//! cargo run --example gold_tables [path/to/diagram.bpmn]
//! ```

use std::path::PathBuf;

use bpmnx::gold::{gold_to_csv, parse_bpmn_xml};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/corpus/loan_application.bpmn"));
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("diagram");
    let gold = parse_bpmn_xml(&std::fs::read(&path)?, id)?;

    println!("{}: {} elements, {} relations", gold.diagram_id, gold.elements.len(), gold.relations.len());
    for e in &gold.elements {
        println!("  {:<22} {:<14} {}", e.element_type, e.id, e.name);
    }
    for r in &gold.relations {
        println!(
            "  {} -[{}]-> {}",
            display(&r.source_name, &r.source_id),
            r.relation_type,
            display(&r.target_name, &r.target_id)
        );
    }

    let (elements, relations) = gold_to_csv(&gold);
    println!("\n{}", String::from_utf8(elements)?);
    println!("{}", String::from_utf8(relations)?);
    Ok(())
}

fn display<'a>(name: &'a str, id: &'a str) -> &'a str {
    if name.is_empty() {
        id
    } else {
        name
    }
}
