use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::corpus::load_gold;
use super::{csv_bytes, io_error, read_to_string, to_json, write_file, CommandError, Failure, RunKey};
use crate::eval::{
    aggregate, error_distribution, score_diagram, AggregationMode, ErrorDistributionRow, EvalRegime, EvalSetting, MetricReport,
};
use crate::gold::GoldStandard;
use crate::pipeline::ExtractionRecord;
use crate::schema::{ExtractedDiagram, Strictness, TypeNormalizationTable};

pub const AGGREGATE_FILE: &str = "aggregate.json";
pub const PER_DIAGRAM_DIR: &str = "per_diagram";
pub const ERRORS_JSON: &str = "errors.json";
pub const ERRORS_CSV: &str = "errors.csv";
/// Label of the pooled score over all evaluated settings.
pub const OVERALL_LABEL: &str = "overall";

const PER_DIAGRAM_HEADER: [&str; 9] = ["diagram_id", "regime", "strictness", "tp", "fp", "fn", "precision", "recall", "f1"];

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub settings: Vec<EvalSetting>,
    pub aggregation: AggregationMode,
    pub table: TypeNormalizationTable,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            settings: EvalSetting::all(),
            aggregation: AggregationMode::Micro,
            table: TypeNormalizationTable::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingResult {
    pub regime: EvalRegime,
    pub strictness: Strictness,
    #[serde(flatten)]
    pub metrics: MetricReport,
}

impl SettingResult {
    pub fn setting(&self) -> EvalSetting {
        EvalSetting { regime: self.regime, strictness: self.strictness }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    #[serde(flatten)]
    pub key: RunKey,
    pub diagrams: usize,
    pub unparseable: usize,
    pub results: Vec<SettingResult>,
    /// All settings pooled with the same aggregation mode.
    pub overall: MetricReport,
}

impl RunAggregate {
    /// F1 per setting label, plus [`OVERALL_LABEL`].
    pub fn f1_by_label(&self) -> BTreeMap<String, f64> {
        let mut m: BTreeMap<String, f64> = self.results.iter().map(|r| (r.setting().to_string(), r.metrics.f1)).collect();
        m.insert(OVERALL_LABEL.to_string(), self.overall.f1);
        m
    }

    pub fn result(&self, setting: EvalSetting) -> Option<&MetricReport> {
        self.results.iter().find(|r| r.setting() == setting).map(|r| &r.metrics)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub aggregation: AggregationMode,
    /// Sorted by run key.
    pub runs: Vec<RunAggregate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateSummary {
    pub report: AggregateReport,
    pub failures: Vec<Failure>,
}

/// Reads every `*.json` record in `dir`, in file-name order. Unreadable records become failures.
pub fn load_records(dir: &Path) -> Result<(Vec<ExtractionRecord>, Vec<Failure>), CommandError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_error(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for path in paths {
        match serde_json::from_str::<ExtractionRecord>(&read_to_string(&path)?) {
            Ok(r) => records.push(r),
            Err(e) => failures.push(Failure::new(path.display().to_string(), e)),
        }
    }
    Ok((records, failures))
}

type RecordSet = BTreeMap<RunKey, BTreeMap<String, ExtractionRecord>>;

fn gather(records_dirs: &[PathBuf]) -> Result<(RecordSet, Vec<Failure>), CommandError> {
    let mut runs: RecordSet = BTreeMap::new();
    let mut failures = Vec::new();
    for dir in records_dirs {
        let (records, bad) = load_records(dir)?;
        failures.extend(bad);
        for r in records {
            let key = RunKey::of(&r);
            let id = r.diagram_id.clone();
            if runs.entry(key.clone()).or_default().insert(id.clone(), r).is_some() {
                failures.push(Failure::new(&id, format!("duplicate record for run {key}; the later file wins")));
            }
        }
    }
    Ok((runs, failures))
}

fn load_golds<'a>(
    gold_dir: &Path,
    ids: impl IntoIterator<Item = &'a String>,
) -> Result<BTreeMap<String, GoldStandard>, CommandError> {
    let mut golds = BTreeMap::new();
    for id in ids {
        if !golds.contains_key(id) {
            golds.insert(id.clone(), load_gold(gold_dir, id)?);
        }
    }
    Ok(golds)
}

fn prediction(record: &ExtractionRecord) -> ExtractedDiagram {
    record.outcome.diagram_or_empty()
}

/// Scores every record under each requested setting. Writes `per_diagram/<run>.csv` and
/// `aggregate.json` into `out_dir`. Unparseable records score as empty predictions.
pub fn cmd_evaluate(
    records_dirs: &[PathBuf],
    gold_dir: &Path,
    options: &EvalOptions,
    out_dir: &Path,
) -> Result<EvaluateSummary, CommandError> {
    if options.settings.is_empty() {
        return Err(CommandError::Invalid("no evaluation settings requested".into()));
    }
    let (runs, failures) = gather(records_dirs)?;
    let golds = load_golds(gold_dir, runs.values().flat_map(|r| r.keys()))?;

    let mut aggregates = Vec::new();
    for (key, records) in &runs {
        let mut rows = Vec::new();
        let mut per_setting: Vec<Vec<MetricReport>> = vec![Vec::new(); options.settings.len()];
        for (id, record) in records {
            let pred = prediction(record);
            for (i, s) in options.settings.iter().enumerate() {
                let m = score_diagram(&golds[id], &pred, s.regime, s.strictness, &options.table);
                rows.push(vec![
                    id.clone(),
                    s.regime.to_string(),
                    s.strictness.to_string(),
                    m.tp.to_string(),
                    m.fp.to_string(),
                    m.fn_.to_string(),
                    m.precision.to_string(),
                    m.recall.to_string(),
                    m.f1.to_string(),
                ]);
                per_setting[i].push(m);
            }
        }
        write_file(&out_dir.join(PER_DIAGRAM_DIR).join(format!("{}.csv", key.slug())), csv_bytes(&PER_DIAGRAM_HEADER, rows))?;

        let results: Vec<SettingResult> = options
            .settings
            .iter()
            .zip(&per_setting)
            .map(|(s, reports)| SettingResult {
                regime: s.regime,
                strictness: s.strictness,
                metrics: aggregate(reports, options.aggregation).expect("every run has a record"),
            })
            .collect();
        let overall = match options.aggregation {
            AggregationMode::Micro => aggregate(&per_setting.concat(), AggregationMode::Micro),
            AggregationMode::Macro => aggregate(&results.iter().map(|r| r.metrics).collect::<Vec<_>>(), AggregationMode::Macro),
        }
        .expect("at least one setting");
        aggregates.push(RunAggregate {
            key: key.clone(),
            diagrams: records.len(),
            unparseable: records.values().filter(|r| !r.outcome.is_parsed()).count(),
            results,
            overall,
        });
    }

    let report = AggregateReport { aggregation: options.aggregation, runs: aggregates };
    write_file(&out_dir.join(AGGREGATE_FILE), to_json(&report))?;
    Ok(EvaluateSummary { report, failures })
}

pub fn load_aggregate(path: &Path) -> Result<AggregateReport, CommandError> {
    serde_json::from_str(&read_to_string(path)?)
        .map_err(|e| CommandError::Invalid(format!("{} is not an aggregate report: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorsSummary {
    pub rows: Vec<ErrorDistributionRow>,
    pub failures: Vec<Failure>,
}

/// Per-type error table over every record in `records_dirs`, written as `errors.json` and
/// `errors.csv`. Gold counts cover each evaluated diagram once.
pub fn cmd_errors(
    records_dirs: &[PathBuf],
    gold_dir: &Path,
    table: &TypeNormalizationTable,
    top_n: usize,
    out_dir: &Path,
) -> Result<ErrorsSummary, CommandError> {
    let (runs, failures) = gather(records_dirs)?;
    let ids: BTreeSet<&String> = runs.values().flat_map(|r| r.keys()).collect();
    let golds = load_golds(gold_dir, ids)?;
    let predictions: Vec<(&GoldStandard, ExtractedDiagram)> =
        runs.values().flat_map(|r| r.iter()).map(|(id, rec)| (&golds[id], prediction(rec))).collect();
    let pairs: Vec<(&GoldStandard, &ExtractedDiagram)> = predictions.iter().map(|(g, p)| (*g, p)).collect();
    let corpus: Vec<GoldStandard> = golds.values().cloned().collect();
    let rows = error_distribution(&corpus, &pairs, table, top_n);

    write_file(&out_dir.join(ERRORS_JSON), to_json(&rows))?;
    let csv_rows = rows.iter().map(|r| {
        vec![r.element_type.clone(), r.gold_count.to_string(), r.error_count.to_string(), format!("{:.3}", r.error_rate)]
    });
    write_file(&out_dir.join(ERRORS_CSV), csv_bytes(&["type", "gold_count", "error_count", "error_rate"], csv_rows))?;
    Ok(ErrorsSummary { rows, failures })
}

pub fn load_errors(path: &Path) -> Result<Vec<ErrorDistributionRow>, CommandError> {
    serde_json::from_str(&read_to_string(path)?)
        .map_err(|e| CommandError::Invalid(format!("{} is not an error table: {e}", path.display())))
}
