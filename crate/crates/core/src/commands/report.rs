use std::fmt::Write as _;
use std::path::Path;

use super::evaluate::{AggregateReport, OVERALL_LABEL};
use super::stats::StatsReport;
use super::{fmt3, fmt_opt, write_file, CommandError};
use crate::eval::{ErrorDistributionRow, EvalSetting, MetricReport};
use crate::stats::format_p;

pub const REPORT_FILE: &str = "report.md";

const ERROR_ROWS: usize = 10;

/// Markdown table whose numeric columns (from `numeric_from` on) get their largest cells bolded.
/// Values are compared after rounding to the printed precision, so printed ties are all bold.
fn table(out: &mut String, header: &[&str], rows: &[Vec<String>], numeric_from: usize) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let align: Vec<&str> = header.iter().enumerate().map(|(i, _)| if i < numeric_from { "---" } else { "---:" }).collect();
    let _ = writeln!(out, "| {} |", align.join(" | "));
    let best: Vec<Option<f64>> = (0..header.len())
        .map(|c| {
            if c < numeric_from {
                return None;
            }
            rows.iter().filter_map(|r| r[c].parse::<f64>().ok()).reduce(f64::max)
        })
        .collect();
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| match (best[c], cell.parse::<f64>()) {
                (Some(b), Ok(v)) if v == b => format!("**{cell}**"),
                _ => cell.clone(),
            })
            .collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
    out.push('\n');
}

fn metric_cells(m: &MetricReport) -> [String; 3] {
    [fmt3(m.precision), fmt3(m.recall), fmt3(m.f1)]
}

/// Deterministic Markdown: one table per evaluation setting plus the pooled score, then the
/// error table and the statistics when given.
pub fn render_report(
    aggregate: &AggregateReport,
    stats: Option<&StatsReport>,
    errors: Option<&[ErrorDistributionRow]>,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# BPMN extraction report\n");
    let _ = writeln!(
        out,
        "Runs: {}. Aggregation: {}.\n",
        aggregate.runs.len(),
        match aggregate.aggregation {
            crate::eval::AggregationMode::Micro => "micro",
            crate::eval::AggregationMode::Macro => "macro",
        }
    );

    let mut runs: Vec<_> = aggregate.runs.iter().collect();
    runs.sort_by(|a, b| a.key.cmp(&b.key));

    let _ = writeln!(out, "## Runs\n");
    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            vec![
                r.key.backend.clone(),
                r.key.ocr_mode.clone(),
                r.key.prompt_variant.clone(),
                r.diagrams.to_string(),
                r.unparseable.to_string(),
            ]
        })
        .collect();
    table(&mut out, &["Backend", "OCR", "Prompt", "Diagrams", "Unparseable"], &rows, usize::MAX);

    let header = ["Backend", "OCR", "Prompt", "Precision", "Recall", "F1"];
    let key_cells = |r: &super::RunAggregate| vec![r.key.backend.clone(), r.key.ocr_mode.clone(), r.key.prompt_variant.clone()];
    for setting in EvalSetting::all() {
        let rows: Vec<Vec<String>> = runs
            .iter()
            .filter_map(|r| r.result(setting).map(|m| key_cells(r).into_iter().chain(metric_cells(m)).collect()))
            .collect();
        if rows.is_empty() {
            continue;
        }
        let _ = writeln!(out, "## {} / {}\n", setting.regime, setting.strictness);
        table(&mut out, &header, &rows, 3);
    }
    let _ = writeln!(out, "## {OVERALL_LABEL}\n");
    let rows: Vec<Vec<String>> =
        runs.iter().map(|r| key_cells(r).into_iter().chain(metric_cells(&r.overall)).collect()).collect();
    table(&mut out, &header, &rows, 3);

    if let Some(errors) = errors {
        let _ = writeln!(out, "## Error distribution\n");
        let rows: Vec<Vec<String>> = errors
            .iter()
            .take(ERROR_ROWS)
            .map(|e| vec![e.element_type.clone(), e.gold_count.to_string(), e.error_count.to_string(), fmt3(e.error_rate)])
            .collect();
        table(&mut out, &["Type", "Gold", "Errors", "Errors per gold"], &rows, usize::MAX);
    }

    if let Some(stats) = stats {
        let _ = writeln!(out, "## Wilcoxon signed-rank tests ({})\n", stats.by);
        let rows: Vec<Vec<String>> = stats
            .pairwise
            .iter()
            .map(|p| {
                vec![
                    p.family.clone(),
                    p.treatment.clone(),
                    p.baseline.clone(),
                    p.n.to_string(),
                    fmt_opt(p.statistic),
                    p.p_value.map_or_else(|| "n/a".into(), format_p),
                    fmt_opt(p.cohens_d),
                ]
            })
            .collect();
        table(&mut out, &["Family", "Treatment", "Baseline", "n", "W", "p", "Cohen's d"], &rows, usize::MAX);

        let _ = writeln!(out, "## Friedman tests\n");
        let rows: Vec<Vec<String>> = stats
            .friedman
            .iter()
            .map(|f| {
                vec![
                    f.family.clone(),
                    f.treatments.join(", "),
                    f.subjects.to_string(),
                    fmt_opt(f.statistic),
                    f.p_value.map_or_else(|| "n/a".into(), format_p),
                    fmt_opt(f.kendall_w),
                ]
            })
            .collect();
        table(&mut out, &["Family", "Treatments", "n", "Chi-square", "p", "Kendall's W"], &rows, usize::MAX);

        let _ = writeln!(out, "## Mean ranks\n");
        let rows: Vec<Vec<String>> = stats
            .ranks
            .iter()
            .chain(&stats.model_ranks)
            .map(|r| vec![r.family.clone(), r.treatment.clone(), fmt3(r.mean_rank)])
            .collect();
        table(&mut out, &["Family", "Treatment", "Mean rank"], &rows, usize::MAX);
    }
    out
}

/// Renders the report and writes it to `out_dir/report.md`.
pub fn cmd_report(
    aggregate: &AggregateReport,
    stats: Option<&StatsReport>,
    errors: Option<&[ErrorDistributionRow]>,
    out_dir: &Path,
) -> Result<String, CommandError> {
    let text = render_report(aggregate, stats, errors);
    write_file(&out_dir.join(REPORT_FILE), &text)?;
    Ok(text)
}
