//! Scoring against a pair-enumerating oracle on random small instances.

mod common;

use bpmnx::eval::{score_diagram, EvalRegime};
use bpmnx::schema::{Strictness, TypeNormalizationTable};
use common::{arc, gold_of, item, oracle, pred_of, Item};
use proptest::prelude::*;

const NAMES: [&str; 6] = ["Check order", "check  ORDER", "Ship", "ship ", "", "Bill"];
const TYPES: [&str; 6] = ["task", "User Task", "startEvent", "end_event", "exclusiveGateway", "lane"];
const FLOWS: [&str; 4] = ["sequenceFlow", "sequence flow", "messageFlow", "association"];

fn element() -> impl Strategy<Value = Item> {
    (0..NAMES.len(), 0..TYPES.len()).prop_map(|(n, t)| item(NAMES[n], TYPES[t]))
}

fn relation() -> impl Strategy<Value = Item> {
    (0..NAMES.len(), 0..NAMES.len(), 0..FLOWS.len()).prop_map(|(s, d, t)| arc(NAMES[s], NAMES[d], FLOWS[t]))
}

fn check(gold: &[Item], pred: &[Item], regime: EvalRegime) {
    let table = TypeNormalizationTable::default();
    for s in [Strictness::Strict, Strictness::Relaxed] {
        let r = score_diagram(&gold_of(gold, regime), &pred_of(pred, regime), regime, s, &table);
        assert_eq!((r.tp, r.fp, r.fn_), oracle(gold, pred, regime, s, &table), "{regime}/{s}: {gold:?} vs {pred:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn element_regimes(gold in prop::collection::vec(element(), 0..=6), pred in prop::collection::vec(element(), 0..=6)) {
        for regime in [EvalRegime::NameOnly, EvalRegime::NameType, EvalRegime::TypeOnly] {
            check(&gold, &pred, regime);
        }
    }

    #[test]
    fn relation_regime(gold in prop::collection::vec(relation(), 0..=6), pred in prop::collection::vec(relation(), 0..=6)) {
        check(&gold, &pred, EvalRegime::RelationType);
    }
}

#[test]
fn one_prediction_can_satisfy_several_gold_items() {
    // Existential, not one-to-one: a single task covers both typed-only gold tasks after
    // dedup collapses them, but distinct names stay distinct.
    let gold = [item("A", "task"), item("B", "task")];
    let pred = [item("A", "task")];
    let table = TypeNormalizationTable::default();
    let by_type = score_diagram(
        &gold_of(&gold, EvalRegime::TypeOnly),
        &pred_of(&pred, EvalRegime::TypeOnly),
        EvalRegime::TypeOnly,
        Strictness::Strict,
        &table,
    );
    assert_eq!((by_type.tp, by_type.fp, by_type.fn_), (1, 0, 0));
    let by_name = score_diagram(
        &gold_of(&gold, EvalRegime::NameType),
        &pred_of(&pred, EvalRegime::NameType),
        EvalRegime::NameType,
        Strictness::Strict,
        &table,
    );
    assert_eq!((by_name.tp, by_name.fp, by_name.fn_), (1, 0, 1));
}
