//! Matching operators, per-diagram scoring, aggregation and the error distribution.
//!
//! Scoring follows existential set semantics: a gold item is a true positive when at least one
//! prediction matches it, a prediction is a false positive when it matches no gold item, and a
//! gold item is a false negative when no prediction matches it. This is not a one-to-one
//! (bipartite) alignment. Both sides are deduplicated first under the regime's key at full type
//! granularity, so a repeated prediction is only counted once, and under relaxed matching one
//! prediction can cover several gold items of the same type family.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gold::GoldStandard;
use crate::schema::{canonical_type, normalize_label, normalize_type, ExtractedDiagram, Strictness, TypeNormalizationTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalRegime {
    NameOnly,
    NameType,
    RelationType,
    TypeOnly,
}

impl EvalRegime {
    pub const ALL: [EvalRegime; 4] = [EvalRegime::NameOnly, EvalRegime::NameType, EvalRegime::RelationType, EvalRegime::TypeOnly];

    pub fn has_type_component(self) -> bool {
        self != EvalRegime::NameOnly
    }

    /// Strictness levels reported for this regime. Name-only has no relaxed variant.
    pub fn strictness_levels(self) -> &'static [Strictness] {
        match self {
            EvalRegime::NameOnly => &[Strictness::Strict],
            _ => &[Strictness::Strict, Strictness::Relaxed],
        }
    }
}

impl fmt::Display for EvalRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalRegime::NameOnly => "name-only",
            EvalRegime::NameType => "name-type",
            EvalRegime::RelationType => "relation-type",
            EvalRegime::TypeOnly => "type-only",
        })
    }
}

impl FromStr for EvalRegime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['_', '+'], "-").as_str() {
            "name-only" | "name" => Ok(EvalRegime::NameOnly),
            "name-type" => Ok(EvalRegime::NameType),
            "relation-type" | "relations-type" | "relation" => Ok(EvalRegime::RelationType),
            "type-only" | "type" => Ok(EvalRegime::TypeOnly),
            other => Err(format!("unknown regime '{other}'")),
        }
    }
}

/// One reported (regime, strictness) column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EvalSetting {
    pub regime: EvalRegime,
    pub strictness: Strictness,
}

impl EvalSetting {
    /// The seven reported settings: name-only strict, then strict/relaxed for the other three regimes.
    pub fn all() -> Vec<EvalSetting> {
        EvalRegime::ALL
            .iter()
            .flat_map(|&regime| regime.strictness_levels().iter().map(move |&strictness| EvalSetting { regime, strictness }))
            .collect()
    }
}

impl fmt::Display for EvalSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.regime, self.strictness)
    }
}

/// A gold or predicted item as seen by the matching operators. Relations carry endpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalItem {
    pub name: String,
    pub item_type: String,
    pub endpoints: Option<(String, String)>,
}

impl EvalItem {
    pub fn element(name: impl Into<String>, item_type: impl Into<String>) -> Self {
        EvalItem { name: name.into(), item_type: item_type.into(), endpoints: None }
    }

    pub fn relation(source: impl Into<String>, target: impl Into<String>, item_type: impl Into<String>) -> Self {
        EvalItem { name: String::new(), item_type: item_type.into(), endpoints: Some((source.into(), target.into())) }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{regime} matching needs relation endpoints")]
    MissingField { regime: EvalRegime },
    #[error("cannot aggregate an empty set of reports")]
    EmptyInput,
}

/// Whether predicted item `m` satisfies gold item `g` under the regime.
pub fn match_pair(
    g: &EvalItem,
    m: &EvalItem,
    regime: EvalRegime,
    strictness: Strictness,
    table: &TypeNormalizationTable,
) -> Result<bool, EvalError> {
    let types = || normalize_type(&g.item_type, table, strictness) == normalize_type(&m.item_type, table, strictness);
    let names = || normalize_label(&g.name) == normalize_label(&m.name);
    Ok(match regime {
        EvalRegime::NameOnly => names(),
        EvalRegime::TypeOnly => types(),
        EvalRegime::NameType => names() && types(),
        EvalRegime::RelationType => {
            let (Some((gs, gd)), Some((ms, md))) = (&g.endpoints, &m.endpoints) else {
                return Err(EvalError::MissingField { regime });
            };
            normalize_label(gs) == normalize_label(ms) && normalize_label(gd) == normalize_label(md) && types()
        }
    })
}

/// Gold items for a regime: relations for relation-type, elements otherwise.
pub fn gold_items(gold: &GoldStandard, regime: EvalRegime) -> Vec<EvalItem> {
    match regime {
        EvalRegime::RelationType => {
            gold.relations.iter().map(|r| EvalItem::relation(&r.source_name, &r.target_name, &r.relation_type)).collect()
        }
        _ => gold.elements.iter().map(|e| EvalItem::element(&e.name, &e.element_type)).collect(),
    }
}

/// Predicted items for a regime.
///
/// Element regimes see elements, flows (named by their label) and pools/lanes, mirroring the
/// gold tables. Predictions lacking a field the regime needs are dropped: name+type drops
/// entries with an empty name or type, type-only drops entries with an empty type.
pub fn predicted_items(pred: &ExtractedDiagram, regime: EvalRegime) -> Vec<EvalItem> {
    if regime == EvalRegime::RelationType {
        return pred
            .flows
            .iter()
            .map(|f| EvalItem::relation(pred.resolve_endpoint(&f.source), pred.resolve_endpoint(&f.target), &f.flow_type))
            .collect();
    }
    let mut items: Vec<EvalItem> = pred.elements.iter().map(|e| EvalItem::element(&e.name, &e.element_type)).collect();
    items.extend(pred.flows.iter().map(|f| EvalItem::element(f.label.clone().unwrap_or_default(), &f.flow_type)));
    for pool in pred.pools.iter().flatten() {
        items.push(EvalItem::element(&pool.name, "pool"));
        items.extend(pool.lanes.iter().map(|l| EvalItem::element(l, "lane")));
    }
    let complete = |i: &EvalItem| match regime {
        EvalRegime::NameType => !normalize_label(&i.name).is_empty() && !canonical_type(&i.item_type).is_empty(),
        EvalRegime::TypeOnly => !canonical_type(&i.item_type).is_empty(),
        _ => true,
    };
    items.retain(complete);
    items
}

/// Normalized key under which two items match iff their keys are equal.
fn item_key(item: &EvalItem, regime: EvalRegime, strictness: Strictness, table: &TypeNormalizationTable) -> Vec<String> {
    let ty = || normalize_type(&item.item_type, table, strictness);
    match regime {
        EvalRegime::NameOnly => vec![normalize_label(&item.name)],
        EvalRegime::TypeOnly => vec![ty()],
        EvalRegime::NameType => vec![normalize_label(&item.name), ty()],
        EvalRegime::RelationType => {
            let (s, d) = item.endpoints.as_ref().map(|(s, d)| (s.as_str(), d.as_str())).unwrap_or(("", ""));
            vec![normalize_label(s), normalize_label(d), ty()]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricReport {
    /// Derives P/R/F1. Both sides empty scores 1 across the board; a zero denominator
    /// otherwise yields 0 for that metric.
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        if tp + fp + fn_ == 0 {
            return MetricReport { tp, fp, fn_, precision: 1.0, recall: 1.0, f1: 1.0 };
        }
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        MetricReport { tp, fp, fn_, precision, recall, f1 }
    }
}

fn dedup_keys(
    items: &[EvalItem],
    regime: EvalRegime,
    strictness: Strictness,
    table: &TypeNormalizationTable,
) -> BTreeSet<Vec<String>> {
    items.iter().map(|i| item_key(i, regime, strictness, table)).collect()
}

/// Scores item lists directly. [`score_diagram`] builds the lists from gold tables and a prediction.
///
/// Both sides are deduplicated at full type granularity; matching then compares at
/// `strictness`. Under relaxed matching one prediction can therefore satisfy several gold
/// items of the same family.
pub fn score_items(
    gold: &[EvalItem],
    pred: &[EvalItem],
    regime: EvalRegime,
    strictness: Strictness,
    table: &TypeNormalizationTable,
) -> MetricReport {
    // Full-granularity key -> key at the requested strictness, one entry per distinct item.
    let keyed = |items: &[EvalItem]| -> BTreeMap<Vec<String>, Vec<String>> {
        items
            .iter()
            .map(|i| {
                let strict = item_key(i, regime, Strictness::Strict, table);
                let level =
                    if strictness == Strictness::Strict { strict.clone() } else { item_key(i, regime, strictness, table) };
                (strict, level)
            })
            .collect()
    };
    let (g, m) = (keyed(gold), keyed(pred));
    let g_match: BTreeSet<&Vec<String>> = g.values().collect();
    let m_match: BTreeSet<&Vec<String>> = m.values().collect();
    let tp = g.values().filter(|k| m_match.contains(k)).count() as u64;
    let fp = m.values().filter(|k| !g_match.contains(k)).count() as u64;
    let fn_ = g.len() as u64 - tp;
    MetricReport::from_counts(tp, fp, fn_)
}

pub fn score_diagram(
    gold: &GoldStandard,
    pred: &ExtractedDiagram,
    regime: EvalRegime,
    strictness: Strictness,
    table: &TypeNormalizationTable,
) -> MetricReport {
    score_items(&gold_items(gold, regime), &predicted_items(pred, regime), regime, strictness, table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    /// Sum counts, then recompute the metrics.
    #[default]
    Micro,
    /// Average the per-diagram metrics; counts are still summed.
    Macro,
}

pub fn aggregate(reports: &[MetricReport], mode: AggregationMode) -> Result<MetricReport, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let (tp, fp, fn_) = reports.iter().fold((0, 0, 0), |(a, b, c), r| (a + r.tp, b + r.fp, c + r.fn_));
    Ok(match mode {
        AggregationMode::Micro => MetricReport::from_counts(tp, fp, fn_),
        AggregationMode::Macro => {
            let n = reports.len() as f64;
            let mean = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
            MetricReport { tp, fp, fn_, precision: mean(|r| r.precision), recall: mean(|r| r.recall), f1: mean(|r| r.f1) }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDistributionRow {
    pub element_type: String,
    pub gold_count: u64,
    pub error_count: u64,
    pub error_rate: f64,
}

impl ErrorDistributionRow {
    /// `gold_count` must be positive.
    pub fn new(element_type: impl Into<String>, gold_count: u64, error_count: u64) -> Self {
        assert!(gold_count > 0, "error rate needs a positive gold count");
        ErrorDistributionRow {
            element_type: element_type.into(),
            gold_count,
            error_count,
            error_rate: error_count as f64 / gold_count as f64,
        }
    }
}

/// Per-type error counts under strict name+type matching, normalized by gold frequency.
///
/// `gold_corpus` supplies gold counts (each diagram counted once). Each run contributes its
/// unmatched gold elements and unmatched predictions, attributed to their strict type.
/// Rows are sorted by descending error rate and truncated to `top_n`.
pub fn error_distribution(
    gold_corpus: &[GoldStandard],
    runs: &[(&GoldStandard, &ExtractedDiagram)],
    table: &TypeNormalizationTable,
    top_n: usize,
) -> Vec<ErrorDistributionRow> {
    let regime = EvalRegime::NameType;
    let strict = Strictness::Strict;
    let mut gold_counts: BTreeMap<String, u64> = BTreeMap::new();
    for gold in gold_corpus {
        for e in &gold.elements {
            *gold_counts.entry(canonical_type(&e.element_type)).or_default() += 1;
        }
    }
    let mut errors: BTreeMap<String, u64> = BTreeMap::new();
    for (gold, pred) in runs {
        let g_items = gold_items(gold, regime);
        let m_items = predicted_items(pred, regime);
        let g_keys = dedup_keys(&g_items, regime, strict, table);
        let m_keys = dedup_keys(&m_items, regime, strict, table);
        let unmatched = |items: &[EvalItem], other: &BTreeSet<Vec<String>>, errors: &mut BTreeMap<String, u64>| {
            for item in items {
                if !other.contains(&item_key(item, regime, strict, table)) {
                    *errors.entry(canonical_type(&item.item_type)).or_default() += 1;
                }
            }
        };
        unmatched(&g_items, &m_keys, &mut errors);
        unmatched(&m_items, &g_keys, &mut errors);
    }
    let mut rows: Vec<ErrorDistributionRow> = gold_counts
        .into_iter()
        .filter(|(_, count)| *count > 0)
        .map(|(ty, count)| {
            let errs = errors.get(&ty).copied().unwrap_or(0);
            ErrorDistributionRow::new(ty, count, errs)
        })
        .collect();
    rows.sort_by(|a, b| b.error_rate.total_cmp(&a.error_rate).then_with(|| a.element_type.cmp(&b.element_type)));
    rows.truncate(top_n);
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{ExtractedElement, ExtractedFlow};

    fn table() -> TypeNormalizationTable {
        TypeNormalizationTable::default()
    }

    fn names(v: &[&str]) -> Vec<EvalItem> {
        v.iter().map(|n| EvalItem::element(*n, "task")).collect()
    }

    #[test]
    fn relaxed_match_can_cover_several_gold_items() {
        let gold = [EvalItem::element("A", "startEvent"), EvalItem::element("A", "endEvent"), EvalItem::element("B", "task")];
        let pred = [EvalItem::element("A", "intermediateEvent")];
        let strict = score_items(&gold, &pred, EvalRegime::NameType, Strictness::Strict, &table());
        let relaxed = score_items(&gold, &pred, EvalRegime::NameType, Strictness::Relaxed, &table());
        assert_eq!((strict.tp, strict.fp, strict.fn_), (0, 1, 3));
        assert_eq!((relaxed.tp, relaxed.fp, relaxed.fn_), (2, 0, 1));
        // Relaxed never scores below strict on the same input.
        let pred = [EvalItem::element("A", "startEvent"), EvalItem::element("A", "endEvent")];
        let strict = score_items(&gold, &pred, EvalRegime::NameType, Strictness::Strict, &table());
        let relaxed = score_items(&gold, &pred, EvalRegime::NameType, Strictness::Relaxed, &table());
        assert_eq!((strict.tp, relaxed.tp), (2, 2));
        assert!(relaxed.f1 >= strict.f1);
    }

    #[test]
    fn match_pair_examples() {
        let t = table();
        let g = EvalItem::element("Check order", "task");
        let m = EvalItem::element("check  ORDER", "task");
        assert!(match_pair(&g, &m, EvalRegime::NameType, Strictness::Strict, &t).unwrap());

        let g = EvalItem::element("x", "exclusivegateway");
        let m = EvalItem::element("y", "gateway");
        assert!(match_pair(&g, &m, EvalRegime::TypeOnly, Strictness::Relaxed, &t).unwrap());
        assert!(!match_pair(&g, &m, EvalRegime::TypeOnly, Strictness::Strict, &t).unwrap());

        let g = EvalItem::relation("A", "B", "sequenceflow");
        let m = EvalItem::relation("A", "B", "flow");
        assert!(!match_pair(&g, &m, EvalRegime::RelationType, Strictness::Strict, &t).unwrap());
        assert!(match_pair(&g, &m, EvalRegime::RelationType, Strictness::Relaxed, &t).unwrap());
    }

    #[test]
    fn relation_regime_needs_endpoints() {
        let e = EvalItem::element("a", "task");
        assert_eq!(
            match_pair(&e, &e, EvalRegime::RelationType, Strictness::Strict, &table()),
            Err(EvalError::MissingField { regime: EvalRegime::RelationType })
        );
    }

    #[test]
    fn half_overlap() {
        let r = score_items(&names(&["a", "b"]), &names(&["a", "c"]), EvalRegime::NameOnly, Strictness::Strict, &table());
        assert_eq!((r.tp, r.fp, r.fn_), (1, 1, 1));
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn degenerate_conventions() {
        let t = table();
        let both = score_items(&[], &[], EvalRegime::NameOnly, Strictness::Strict, &t);
        assert_eq!((both.precision, both.recall, both.f1), (1.0, 1.0, 1.0));
        let no_pred = score_items(&names(&["a"]), &[], EvalRegime::NameOnly, Strictness::Strict, &t);
        assert_eq!((no_pred.precision, no_pred.recall, no_pred.f1), (0.0, 0.0, 0.0));
        let no_gold = score_items(&[], &names(&["a"]), EvalRegime::NameOnly, Strictness::Strict, &t);
        assert_eq!((no_gold.precision, no_gold.recall, no_gold.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn duplicates_count_once() {
        let r = score_items(&names(&["a"]), &names(&["a", "A ", "a"]), EvalRegime::NameOnly, Strictness::Strict, &table());
        assert_eq!((r.tp, r.fp, r.fn_), (1, 0, 0));
    }

    #[test]
    fn incomplete_predictions_are_dropped_for_name_type() {
        let pred = ExtractedDiagram {
            elements: vec![
                ExtractedElement { element_type: "task".into(), name: "".into(), bbox: None, local_id: None },
                ExtractedElement { element_type: "".into(), name: "x".into(), bbox: None, local_id: None },
            ],
            flows: vec![ExtractedFlow { source: "a".into(), target: "b".into(), flow_type: "sequenceflow".into(), label: None }],
            pools: None,
        };
        assert!(predicted_items(&pred, EvalRegime::NameType).is_empty());
        assert_eq!(predicted_items(&pred, EvalRegime::NameOnly).len(), 3);
        assert_eq!(predicted_items(&pred, EvalRegime::TypeOnly).len(), 2);
        assert_eq!(predicted_items(&pred, EvalRegime::RelationType).len(), 1);
    }

    #[test]
    fn aggregation() {
        let a = MetricReport::from_counts(1, 0, 0);
        let b = MetricReport::from_counts(0, 1, 1);
        assert_eq!(aggregate(&[a], AggregationMode::Micro).unwrap(), a);
        assert_eq!(aggregate(&[a], AggregationMode::Macro).unwrap(), a);
        let micro = aggregate(&[a, b], AggregationMode::Micro).unwrap();
        assert_eq!((micro.precision, micro.recall, micro.f1), (0.5, 0.5, 0.5));
        let macro_ = aggregate(&[a, b], AggregationMode::Macro).unwrap();
        assert_eq!(macro_.f1, 0.5);
        assert_eq!(aggregate(&[], AggregationMode::Micro), Err(EvalError::EmptyInput));
    }

    #[test]
    fn error_rate_arithmetic() {
        let r = ErrorDistributionRow::new("sequenceflow", 482, 66958);
        assert!((r.error_rate - 138.917).abs() < 5e-4);
        assert_eq!(format!("{:.3}", r.error_rate), "138.917");
        assert_eq!(ErrorDistributionRow::new("datastore", 1, 202).error_rate, 202.0);
    }

    #[test]
    fn perfect_run_has_no_errors() {
        let gold = GoldStandard {
            diagram_id: "d".into(),
            elements: vec![
                crate::gold::GoldElement { id: "a".into(), name: "A".into(), element_type: "task".into() },
                crate::gold::GoldElement { id: "s".into(), name: "Go".into(), element_type: "startevent".into() },
            ],
            relations: vec![],
        };
        let pred = ExtractedDiagram {
            elements: gold
                .elements
                .iter()
                .map(|e| ExtractedElement {
                    element_type: e.element_type.clone(),
                    name: e.name.clone(),
                    bbox: None,
                    local_id: None,
                })
                .collect(),
            flows: vec![],
            pools: None,
        };
        let rows = error_distribution(std::slice::from_ref(&gold), &[(&gold, &pred)], &table(), 10);
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.error_count == 0));
    }
}
