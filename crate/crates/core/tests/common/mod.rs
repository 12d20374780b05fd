//! Shared helpers for the integration tests: a literal matching oracle and diagram builders.
#![allow(dead_code)]

use bpmnx::eval::EvalRegime;
use bpmnx::gold::{GoldElement, GoldRelation, GoldStandard};
use bpmnx::schema::{
    normalize_label, normalize_type, ExtractedDiagram, ExtractedElement, ExtractedFlow, Strictness, TypeNormalizationTable,
};

/// One gold or predicted item: a name and type, and for relations the target name (the
/// name doubles as the source).
#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub name: String,
    pub ty: String,
    pub target: String,
}

pub fn item(name: &str, ty: &str) -> Item {
    Item { name: name.into(), ty: ty.into(), target: String::new() }
}

pub fn arc(source: &str, target: &str, ty: &str) -> Item {
    Item { name: source.into(), ty: ty.into(), target: target.into() }
}

/// An item with its fields normalized once; pairs are then compared field by field.
struct Norm {
    name: String,
    target: String,
    strict: String,
    relaxed: String,
}

fn norm(i: &Item, table: &TypeNormalizationTable) -> Norm {
    Norm {
        name: normalize_label(&i.name),
        target: normalize_label(&i.target),
        strict: normalize_type(&i.ty, table, Strictness::Strict),
        relaxed: normalize_type(&i.ty, table, Strictness::Relaxed),
    }
}

fn same(a: &Norm, b: &Norm, regime: EvalRegime, s: Strictness) -> bool {
    let names = a.name == b.name;
    let types = match s {
        Strictness::Strict => a.strict == b.strict,
        Strictness::Relaxed => a.relaxed == b.relaxed,
    };
    match regime {
        EvalRegime::NameOnly => names,
        EvalRegime::TypeOnly => types,
        EvalRegime::NameType => names && types,
        EvalRegime::RelationType => names && a.target == b.target && types,
    }
}

/// Collapses items that match each other at full type granularity, keeping the first of each class.
fn distinct(items: Vec<Norm>, regime: EvalRegime) -> Vec<Norm> {
    let mut out: Vec<Norm> = Vec::new();
    for i in items {
        if !out.iter().any(|o| same(o, &i, regime, Strictness::Strict)) {
            out.push(i);
        }
    }
    out
}

/// Existential counts by enumerating every gold x prediction pair.
pub fn oracle(
    gold: &[Item],
    pred: &[Item],
    regime: EvalRegime,
    s: Strictness,
    table: &TypeNormalizationTable,
) -> (u64, u64, u64) {
    let pred: Vec<Norm> = pred
        .iter()
        .filter(|p| match regime {
            EvalRegime::NameType => !normalize_label(&p.name).is_empty() && !p.ty.trim().is_empty(),
            EvalRegime::TypeOnly => !p.ty.trim().is_empty(),
            _ => true,
        })
        .map(|p| norm(p, table))
        .collect();
    let g = distinct(gold.iter().map(|i| norm(i, table)).collect(), regime);
    let m = distinct(pred, regime);
    let tp = g.iter().filter(|gi| m.iter().any(|mi| same(gi, mi, regime, s))).count() as u64;
    let fp = m.iter().filter(|mi| !g.iter().any(|gi| same(gi, mi, regime, s))).count() as u64;
    (tp, fp, g.len() as u64 - tp)
}

/// Gold standard holding `items` as elements, or as relations between synthetic nodes for
/// the relation regime.
pub fn gold_of(items: &[Item], regime: EvalRegime) -> GoldStandard {
    let mut gold = GoldStandard { diagram_id: "g".into(), ..GoldStandard::default() };
    if regime != EvalRegime::RelationType {
        gold.elements = items
            .iter()
            .enumerate()
            .map(|(i, it)| GoldElement { id: format!("e{i}"), name: it.name.clone(), element_type: it.ty.clone() })
            .collect();
        return gold;
    }
    for (i, it) in items.iter().enumerate() {
        let (s, t) = (format!("s{i}"), format!("t{i}"));
        gold.elements.push(GoldElement { id: s.clone(), name: it.name.clone(), element_type: "task".into() });
        gold.elements.push(GoldElement { id: t.clone(), name: it.target.clone(), element_type: "task".into() });
        gold.relations.push(GoldRelation {
            source_id: s,
            target_id: t,
            source_name: it.name.clone(),
            target_name: it.target.clone(),
            relation_type: it.ty.clone(),
            label: String::new(),
        });
    }
    gold
}

/// Prediction holding `items` as elements, or as flows for the relation regime.
pub fn pred_of(items: &[Item], regime: EvalRegime) -> ExtractedDiagram {
    let mut d = ExtractedDiagram::default();
    if regime == EvalRegime::RelationType {
        d.flows = items
            .iter()
            .map(|it| ExtractedFlow { source: it.name.clone(), target: it.target.clone(), flow_type: it.ty.clone(), label: None })
            .collect();
    } else {
        d.elements = items
            .iter()
            .map(|it| ExtractedElement { element_type: it.ty.clone(), name: it.name.clone(), bbox: None, local_id: None })
            .collect();
    }
    d
}
