//! Score a model reply against a gold standard under every matching setting.
//!
//! ```text
//! cargo run --example score_diagram [gold.bpmn reply.txt]
//! ```

use std::path::PathBuf;

use bpmnx::eval::{score_diagram, EvalSetting};
use bpmnx::gold::parse_bpmn_xml;
use bpmnx::schema::{parse_response, TypeNormalizationTable};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (bpmn, reply) = match args.as_slice() {
        [b, r] => (PathBuf::from(b), PathBuf::from(r)),
        _ => (fixtures.join("corpus/hiring_process.bpmn"), fixtures.join("mock/hiring_process.txt")),
    };

    let gold = parse_bpmn_xml(&std::fs::read(&bpmn)?, "gold")?;
    // An unparseable reply is scored as an empty diagram.
    let outcome = parse_response(&std::fs::read_to_string(&reply)?);
    let pred = outcome.diagram_or_empty();
    let table = TypeNormalizationTable::default();

    println!("{:<24} {:>4} {:>4} {:>4} {:>9} {:>7} {:>6}", "setting", "tp", "fp", "fn", "precision", "recall", "f1");
    for setting in EvalSetting::all() {
        let r = score_diagram(&gold, &pred, setting.regime, setting.strictness, &table);
        println!(
            "{:<24} {:>4} {:>4} {:>4} {:>9.3} {:>7.3} {:>6.3}",
            setting.to_string(),
            r.tp,
            r.fp,
            r.fn_,
            r.precision,
            r.recall,
            r.f1
        );
    }
    Ok(())
}
