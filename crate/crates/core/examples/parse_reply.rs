//! Recover a diagram from messy model replies and normalize its element types.
//!
//! ```text
//! cargo run --example parse_reply
//! ```

use bpmnx::schema::{normalize_type, parse_response, Strictness, TypeNormalizationTable};

const REPLIES: &[(&str, &str)] = &[
    ("fenced", "Sure!\n```json\n{\"elements\": [{\"type\": \"Start Event\", \"name\": \"Begin\"}], \"flows\": []}\n```"),
    (
        "trailing commas",
        r#"{"elements": [{"type": "user_task", "name": "Approve",},], "flows": [{"source": "Begin", "target": "Approve", "type": "sequence flow",},],}"#,
    ),
    ("prose around json", r#"The model is {"elements": [{"type": "XOR gateway", "name": "OK?"}]} as requested."#),
    ("no json", "I could not read the image."),
];

fn main() {
    // "XOR gateway" is not in the default table, so relaxed matching would file it under
    // "other". Overrides extend the table.
    let table = TypeNormalizationTable::default().with_overrides([("XOR gateway", "gateway")]).expect("known family");
    for (label, reply) in REPLIES {
        let outcome = parse_response(reply);
        println!("{label}: {:?}", outcome.status);
        let Some(diagram) = &outcome.diagram else { continue };
        for e in &diagram.elements {
            println!(
                "  {:<12} strict={:<14} relaxed={}",
                format!("{:?}", e.name),
                normalize_type(&e.element_type, &table, Strictness::Strict),
                normalize_type(&e.element_type, &table, Strictness::Relaxed),
            );
        }
        for f in &diagram.flows {
            println!("  {} -> {} ({})", f.source, f.target, normalize_type(&f.flow_type, &table, Strictness::Strict));
        }
    }
}
