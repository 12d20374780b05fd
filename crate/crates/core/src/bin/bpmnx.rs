use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bpmnx::commands::{self, CommandError, CompareBy, EvalOptions, Failure, RunKey, RunSpec, StatsSpec};
use bpmnx::config::Config;
use bpmnx::corpus::{CorpusManifest, Split};
use bpmnx::eval::{AggregationMode, EvalRegime, EvalSetting};
use bpmnx::pipeline::{OcrMode, PromptVariant};
use bpmnx::schema::Strictness;

/// Extract BPMN models from diagram images and score them against BPMN XML.
#[derive(Parser)]
#[command(version, after_help = "Exit status: 0 success, 1 configuration error, 2 some files failed.")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for the corpus shuffle.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Output root; every stage reads and writes below it.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pair <stem>.bpmn with <stem>.png and write a seeded train/dev/test manifest.
    Split { corpus_dir: PathBuf },
    /// Parse each BPMN file into element and relation CSVs under <out>/gold.
    Gold {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        split: Option<Split>,
    },
    /// Run a backend over the corpus; records go to <out>/records/<run>.
    Extract {
        #[arg(long, default_value = "mock")]
        backend: String,
        /// baseline, only-example, cot, self-consistency[:k] or dfs-bfs.
        #[arg(long, default_value = "baseline")]
        variant: PromptVariant,
        /// none, always:<engine> or on-miss:<engine>; engines are tesseract, pix2struct, rapidocr, file.
        #[arg(long, default_value = "none")]
        ocr: OcrMode,
        /// train, dev, test or all.
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: SplitArg,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Score records against gold; writes <out>/eval/aggregate.json and per-diagram CSVs.
    Evaluate {
        /// Record directories; defaults to every run under <out>/records.
        #[arg(long, num_args = 1..)]
        records: Vec<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Restrict to these regimes (name-only, name-type, relation-type, type-only).
        #[arg(long, num_args = 1..)]
        regime: Vec<EvalRegime>,
        #[arg(long, num_args = 1..)]
        strictness: Vec<Strictness>,
        /// micro or macro; overrides the configuration file.
        #[arg(long)]
        aggregation: Option<String>,
    },
    /// Per-type error table under strict name+type matching; writes <out>/errors.
    Errors {
        #[arg(long, num_args = 1..)]
        records: Vec<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Wilcoxon, Cohen's d, Friedman and mean ranks over aggregate reports; writes <out>/stats.
    Stats {
        #[arg(long, num_args = 1..)]
        aggregate: Vec<PathBuf>,
        /// Dimension to compare: ocr or variant.
        #[arg(long, default_value = "ocr")]
        by: CompareBy,
        #[arg(long)]
        baseline: Option<String>,
    },
    /// Render <out>/report.md from the evaluation, error and stats outputs.
    Report {
        #[arg(long)]
        aggregate: Option<PathBuf>,
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long)]
        errors: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            eprintln!("{} item(s) failed:", failures.len());
            for f in &failures {
                eprintln!("  {f}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<Vec<Failure>, CommandError> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let out = &cli.out;
    let manifest_at = |p: &Option<PathBuf>| -> Result<CorpusManifest, CommandError> {
        let path = p.clone().unwrap_or_else(|| out.join(commands::MANIFEST_FILE));
        Ok(CorpusManifest::load(&path)?)
    };
    let gold_dir = |p: &Option<PathBuf>| p.clone().unwrap_or_else(|| out.join("gold"));

    match &cli.command {
        Command::Split { corpus_dir } => {
            let m = commands::cmd_split(corpus_dir, cli.seed, out)?;
            let (train, dev, test) = m.counts();
            println!("{} diagrams: train {train}, dev {dev}, test {test} (seed {})", m.entries.len(), m.seed);
            Ok(Vec::new())
        }
        Command::Gold { manifest, split } => {
            let s = commands::cmd_gold(&manifest_at(manifest)?, *split, &out.join("gold"))?;
            println!("wrote gold tables for {} diagrams", s.written.len());
            Ok(s.failures)
        }
        Command::Extract { backend, variant, ocr, split, manifest } => {
            let key = RunKey { backend: backend.clone(), ocr_mode: ocr.to_string(), prompt_variant: variant.to_string() };
            let run = RunSpec {
                backend: backend.clone(),
                prompt_variant: *variant,
                ocr_mode: *ocr,
                split: split.0,
                output_dir: out.join("records").join(key.slug()),
            };
            let s = commands::cmd_extract(&config, &run, &manifest_at(manifest)?)?;
            println!(
                "{}: {} records ({} unparseable), {} backend calls -> {}",
                key,
                s.records.len(),
                s.unparseable.len(),
                s.backend_calls,
                run.output_dir.display()
            );
            Ok(s.failures)
        }
        Command::Evaluate { records, gold, regime, strictness, aggregation } => {
            let aggregation = match aggregation.as_deref() {
                None => config.aggregation,
                Some("micro") => AggregationMode::Micro,
                Some("macro") => AggregationMode::Macro,
                Some(other) => return Err(CommandError::Invalid(format!("unknown aggregation '{other}'"))),
            };
            let settings: Vec<EvalSetting> = EvalSetting::all()
                .into_iter()
                .filter(|s| regime.is_empty() || regime.contains(&s.regime))
                .filter(|s| strictness.is_empty() || strictness.contains(&s.strictness))
                .collect();
            let options = EvalOptions { settings, aggregation, table: config.type_table()? };
            let dirs = record_dirs(records, out)?;
            let s = commands::cmd_evaluate(&dirs, &gold_dir(gold), &options, &out.join("eval"))?;
            for run in &s.report.runs {
                println!("{}: overall F1 {:.3} over {} diagrams", run.key, run.overall.f1, run.diagrams);
            }
            Ok(s.failures)
        }
        Command::Errors { records, gold, top } => {
            let dirs = record_dirs(records, out)?;
            let s = commands::cmd_errors(&dirs, &gold_dir(gold), &config.type_table()?, *top, &out.join("errors"))?;
            for r in &s.rows {
                println!("{:<24} {:>6} {:>8} {:>10.3}", r.element_type, r.gold_count, r.error_count, r.error_rate);
            }
            Ok(s.failures)
        }
        Command::Stats { aggregate, by, baseline } => {
            let paths =
                if aggregate.is_empty() { vec![out.join("eval").join(commands::AGGREGATE_FILE)] } else { aggregate.clone() };
            let spec = StatsSpec { by: *by, baseline: baseline.clone() };
            let s = commands::cmd_stats(&paths, &spec, &out.join("stats"))?;
            println!("{} pairwise tests, {} Friedman tests", s.pairwise.len(), s.friedman.len());
            Ok(Vec::new())
        }
        Command::Report { aggregate, stats, errors } => {
            let aggregate =
                commands::load_aggregate(&aggregate.clone().unwrap_or_else(|| out.join("eval").join(commands::AGGREGATE_FILE)))?;
            let stats = optional(stats, &out.join("stats").join(commands::STATS_JSON), commands::load_stats)?;
            let errors = optional(errors, &out.join("errors").join(commands::ERRORS_JSON), commands::load_errors)?;
            commands::cmd_report(&aggregate, stats.as_ref(), errors.as_deref(), out)?;
            println!("wrote {}", out.join(commands::REPORT_FILE).display());
            Ok(Vec::new())
        }
    }
}

#[derive(Clone, Copy)]
struct SplitArg(Option<Split>);

fn parse_split(s: &str) -> Result<SplitArg, String> {
    if s.eq_ignore_ascii_case("all") {
        Ok(SplitArg(None))
    } else {
        s.parse().map(|s| SplitArg(Some(s)))
    }
}

/// Explicit paths must load; the default path is used only when it exists.
fn optional<T>(
    explicit: &Option<PathBuf>,
    default: &Path,
    load: fn(&Path) -> Result<T, CommandError>,
) -> Result<Option<T>, CommandError> {
    match explicit {
        Some(p) => load(p).map(Some),
        None if default.is_file() => load(default).map(Some),
        None => Ok(None),
    }
}

fn record_dirs(explicit: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>, CommandError> {
    if !explicit.is_empty() {
        return Ok(explicit.to_vec());
    }
    let root = out.join("records");
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&root)
        .map_err(|e| CommandError::Invalid(format!("no --records given and {} is unreadable: {e}", root.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    Ok(dirs)
}
