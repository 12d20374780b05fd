use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::evaluate::{load_aggregate, RunAggregate, OVERALL_LABEL};
use super::{csv_bytes, fmt3, fmt_opt, read_to_string, to_json, write_file, CommandError};
use crate::eval::EvalSetting;
use crate::stats::{
    average_ranks, cohens_d, format_p, friedman_test, wilcoxon_signed_rank, PairedSample, RankMatrix, WilcoxonMode,
};

pub const STATS_JSON: &str = "stats.json";

/// Which run dimension is compared; the remaining dimensions (plus the backend) form a family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompareBy {
    Ocr,
    Variant,
}

impl fmt::Display for CompareBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompareBy::Ocr => "ocr",
            CompareBy::Variant => "variant",
        })
    }
}

impl FromStr for CompareBy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ocr" | "ocr-mode" => Ok(CompareBy::Ocr),
            "variant" | "prompt" | "prompt-variant" => Ok(CompareBy::Variant),
            other => Err(format!("unknown comparison '{other}' (expected ocr or variant)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatsSpec {
    pub by: CompareBy,
    /// Treatment the others are tested against. Defaults to `none` / `baseline` when present,
    /// otherwise the alphabetically first treatment of each family.
    pub baseline: Option<String>,
}

impl Default for StatsSpec {
    fn default() -> Self {
        StatsSpec { by: CompareBy::Ocr, baseline: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseRow {
    pub family: String,
    pub treatment: String,
    pub baseline: String,
    pub n: usize,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub method: Option<String>,
    /// Treatment minus baseline, so positive means the treatment scored higher.
    pub cohens_d: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanRow {
    pub family: String,
    pub treatments: Vec<String>,
    pub subjects: usize,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub kendall_w: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub family: String,
    pub treatment: String,
    pub mean_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub by: CompareBy,
    /// Paired observations: one F1 per setting label.
    pub settings: Vec<String>,
    pub pairwise: Vec<PairwiseRow>,
    pub friedman: Vec<FriedmanRow>,
    /// Mean ranks of treatments within each family (rank 1 = best).
    pub ranks: Vec<RankRow>,
    /// Mean ranks of backends over every (setting, configuration) cell they share.
    pub model_ranks: Vec<RankRow>,
}

/// Canonical order of setting labels: the evaluation settings, then the pooled score.
fn label_order() -> Vec<String> {
    EvalSetting::all().iter().map(ToString::to_string).chain([OVERALL_LABEL.to_string()]).collect()
}

fn ordered_common_labels(maps: &[BTreeMap<String, f64>]) -> Vec<String> {
    let mut order = label_order();
    for m in maps.iter().flat_map(|m| m.keys()) {
        if !order.contains(m) {
            order.push(m.clone());
        }
    }
    order.into_iter().filter(|l| maps.iter().all(|m| m.contains_key(l))).collect()
}

fn split_key(run: &RunAggregate, by: CompareBy) -> (String, String) {
    let k = &run.key;
    match by {
        CompareBy::Ocr => (format!("{}/{}", k.backend, k.prompt_variant), k.ocr_mode.clone()),
        CompareBy::Variant => (format!("{}/{}", k.backend, k.ocr_mode), k.prompt_variant.clone()),
    }
}

fn default_baseline(by: CompareBy, treatments: &[String]) -> String {
    let preferred = match by {
        CompareBy::Ocr => "none",
        CompareBy::Variant => "baseline",
    };
    if treatments.iter().any(|t| t == preferred) {
        preferred.to_string()
    } else {
        treatments[0].clone()
    }
}

/// Pairwise Wilcoxon tests and Cohen's d against a baseline, Friedman tests with Kendall's W per
/// family, and mean ranks. Statistical errors become empty cells with a note.
pub fn compute_stats(runs: &[RunAggregate], spec: &StatsSpec) -> StatsReport {
    let mut families: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>> = BTreeMap::new();
    for run in runs {
        let (family, treatment) = split_key(run, spec.by);
        families.entry(family).or_default().insert(treatment, run.f1_by_label());
    }

    let mut report = StatsReport {
        by: spec.by,
        settings: label_order(),
        pairwise: Vec::new(),
        friedman: Vec::new(),
        ranks: Vec::new(),
        model_ranks: Vec::new(),
    };

    for (family, treatments) in &families {
        let names: Vec<String> = treatments.keys().cloned().collect();
        let maps: Vec<BTreeMap<String, f64>> = treatments.values().cloned().collect();
        let labels = ordered_common_labels(&maps);
        let vector = |t: &str| -> Vec<f64> { labels.iter().map(|l| treatments[t][l]).collect() };

        let baseline = spec.baseline.clone().unwrap_or_else(|| default_baseline(spec.by, &names));
        if names.len() >= 2 && treatments.contains_key(&baseline) {
            for t in names.iter().filter(|t| **t != baseline) {
                let (a, b) = (vector(t), vector(&baseline));
                let mut row = PairwiseRow {
                    family: family.clone(),
                    treatment: t.clone(),
                    baseline: baseline.clone(),
                    n: labels.len(),
                    statistic: None,
                    p_value: None,
                    method: None,
                    cohens_d: None,
                    note: None,
                };
                let mut notes = Vec::new();
                match PairedSample::new(labels.clone(), a.clone(), b.clone())
                    .and_then(|s| wilcoxon_signed_rank(&s, WilcoxonMode::Auto))
                {
                    Ok(r) => {
                        row.statistic = Some(r.statistic);
                        row.p_value = Some(r.p_value);
                        row.method = Some(r.method);
                    }
                    Err(e) => notes.push(format!("wilcoxon: {e}")),
                }
                match cohens_d(&a, &b) {
                    Ok(d) => row.cohens_d = Some(d),
                    Err(e) => notes.push(format!("cohen's d: {e}")),
                }
                row.note = (!notes.is_empty()).then(|| notes.join("; "));
                report.pairwise.push(row);
            }
        }

        if names.len() >= 2 {
            let values: Vec<Vec<f64>> = labels.iter().map(|l| names.iter().map(|t| treatments[t][l]).collect()).collect();
            let mut row = FriedmanRow {
                family: family.clone(),
                treatments: names.clone(),
                subjects: labels.len(),
                statistic: None,
                p_value: None,
                kendall_w: None,
                note: None,
            };
            match RankMatrix::new(labels.clone(), names.clone(), values) {
                Ok(m) => {
                    for (t, r) in names.iter().zip(average_ranks(&m)) {
                        report.ranks.push(RankRow { family: family.clone(), treatment: t.clone(), mean_rank: r });
                    }
                    match friedman_test(&m) {
                        Ok(r) => {
                            row.statistic = Some(r.statistic);
                            row.p_value = Some(r.p_value);
                            row.kendall_w = r.effect_size;
                        }
                        Err(e) => row.note = Some(e.to_string()),
                    }
                }
                Err(e) => row.note = Some(e.to_string()),
            }
            report.friedman.push(row);
        }
    }

    report.model_ranks = model_ranks(runs);
    report
}

/// Backends ranked over every (setting, ocr mode, prompt variant) cell all of them share.
fn model_ranks(runs: &[RunAggregate]) -> Vec<RankRow> {
    let mut by_backend: BTreeMap<&str, BTreeMap<String, f64>> = BTreeMap::new();
    for run in runs {
        let cells = by_backend.entry(&run.key.backend).or_default();
        for (label, f1) in run.f1_by_label() {
            cells.insert(format!("{}/{}/{label}", run.key.ocr_mode, run.key.prompt_variant), f1);
        }
    }
    if by_backend.len() < 2 {
        return Vec::new();
    }
    let backends: Vec<String> = by_backend.keys().map(|b| b.to_string()).collect();
    let first = by_backend.values().next().unwrap();
    let cells: Vec<&String> = first.keys().filter(|c| by_backend.values().all(|m| m.contains_key(*c))).collect();
    let values: Vec<Vec<f64>> = cells.iter().map(|c| by_backend.values().map(|m| m[*c]).collect()).collect();
    match RankMatrix::new(cells.iter().map(|c| c.to_string()).collect(), backends.clone(), values) {
        Ok(m) => backends
            .into_iter()
            .zip(average_ranks(&m))
            .map(|(b, r)| RankRow { family: "backends".into(), treatment: b, mean_rank: r })
            .collect(),
        Err(_) => Vec::new(),
    }
}

/// Loads the aggregate reports, computes the statistics and writes `stats.json` plus
/// `wilcoxon.csv`, `friedman.csv`, `ranks.csv` and `plot_data.csv` into `out_dir`.
pub fn cmd_stats(aggregates: &[PathBuf], spec: &StatsSpec, out_dir: &Path) -> Result<StatsReport, CommandError> {
    let mut runs = Vec::new();
    for path in aggregates {
        runs.extend(load_aggregate(path)?.runs);
    }
    if runs.is_empty() {
        return Err(CommandError::Invalid("no runs in the aggregate reports".into()));
    }
    runs.sort_by(|a, b| a.key.cmp(&b.key));
    runs.dedup_by(|a, b| a.key == b.key);
    let report = compute_stats(&runs, spec);

    write_file(&out_dir.join(STATS_JSON), to_json(&report))?;
    let wilcoxon = report.pairwise.iter().map(|r| {
        vec![
            r.family.clone(),
            r.treatment.clone(),
            r.baseline.clone(),
            r.n.to_string(),
            fmt_opt(r.statistic),
            r.p_value.map_or_else(|| "n/a".into(), format_p),
            fmt_opt(r.cohens_d),
        ]
    });
    write_file(
        &out_dir.join("wilcoxon.csv"),
        csv_bytes(&["family", "treatment", "baseline", "n", "statistic", "p_value", "cohens_d"], wilcoxon),
    )?;
    let friedman = report.friedman.iter().map(|r| {
        vec![
            r.family.clone(),
            r.treatments.len().to_string(),
            r.subjects.to_string(),
            fmt_opt(r.statistic),
            r.p_value.map_or_else(|| "n/a".into(), format_p),
            fmt_opt(r.kendall_w),
        ]
    });
    write_file(&out_dir.join("friedman.csv"), csv_bytes(&["family", "k", "n", "statistic", "p_value", "kendall_w"], friedman))?;
    let ranks =
        report.ranks.iter().chain(&report.model_ranks).map(|r| vec![r.family.clone(), r.treatment.clone(), fmt3(r.mean_rank)]);
    write_file(&out_dir.join("ranks.csv"), csv_bytes(&["family", "treatment", "mean_rank"], ranks))?;
    let plot = runs.iter().flat_map(|run| {
        run.f1_by_label().into_iter().map(move |(label, f1)| {
            vec![run.key.backend.clone(), run.key.ocr_mode.clone(), run.key.prompt_variant.clone(), label, f1.to_string()]
        })
    });
    write_file(&out_dir.join("plot_data.csv"), csv_bytes(&["backend", "ocr_mode", "prompt_variant", "setting", "f1"], plot))?;
    Ok(report)
}

pub fn load_stats(path: &Path) -> Result<StatsReport, CommandError> {
    serde_json::from_str(&read_to_string(path)?)
        .map_err(|e| CommandError::Invalid(format!("{} is not a stats report: {e}", path.display())))
}
