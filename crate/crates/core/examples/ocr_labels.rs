//! Fill unnamed elements of a model reply from an OCR token file.
//!
//! The loan fixture reply leaves three elements unnamed but gives every element a box; the
//! token file has word boxes, so names are assembled from the words inside each element.
//!
//! ```text
//! cargo run --example ocr_labels
//! ```

use std::path::Path;

use bpmnx::ocr::{acquire_tokens, enrich, OcrConfig, OcrEngine, OcrToken, OcrTokenSet};
use bpmnx::schema::parse_response;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let reply = std::fs::read_to_string(root.join("mock/loan_application.txt"))?;
    let diagram = parse_response(&reply).diagram.ok_or("fixture reply should parse")?;
    let tokens = acquire_tokens(&root.join("corpus/loan_application.png"), OcrEngine::File, &OcrConfig::default())?;

    let enriched = enrich(diagram.clone(), &tokens);
    for (before, after) in diagram.elements.iter().zip(&enriched.elements) {
        let mark = if before.name != after.name { "  <- OCR" } else { "" };
        println!("{:<12} {:<22}{mark}", after.element_type, format!("{:?}", after.name));
    }

    // Without boxes the first unused token that is not already a name is taken, in order.
    let plain = OcrTokenSet::new(OcrEngine::File, ["Send decision", "Review application", "Decide on loan"].map(OcrToken::text));
    let mut unboxed = diagram;
    unboxed.elements.iter_mut().for_each(|e| e.bbox = None);
    let names: Vec<String> = enrich(unboxed, &plain).elements.into_iter().map(|e| e.name).collect();
    println!("\nwithout boxes: {names:?}");
    Ok(())
}
