//! Command-line pipeline: ingest, annotate, sample, report.
//!
//! Data artifacts go to files; diagnostics go to stderr as JSON lines.
//! Exit codes: 0 success, 1 runtime fatal, 2 usage error.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::json;

use corpusman::analytics;
use corpusman::anomaly::{self, GroupBy};
use corpusman::corpus::{self, AnnotatedDocument, Document};
use corpusman::curate;
use corpusman::rater::{self, RaterEndpoint};
use corpusman::sampler::{self, SampleSpec, Shortfall, Strategy, Stratify};
use corpusman::schema::{AnnotationRecord, Criterion, DomainType, PromptMode};
use corpusman::tokenizer::WhitespacePunct;

#[derive(Parser)]
#[command(name = "corpusman", version, about = "Corpus annotation and quality-weighted subset selection")]
struct Cli {
    /// Worker thread cap for parallel stages.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// JSON config file; flags override config values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the resolved run configuration and exit without processing.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

/// Values acceptable from a --config file. Precedence: flags > config >
/// defaults.
#[derive(Debug, Default, Deserialize)]
struct FileConfig {
    workers: Option<usize>,
    chunk_budget: Option<usize>,
    seed: Option<u64>,
    budget_tokens: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Read a raw JSONL shard and emit fixed-token-budget documents.
    Ingest(IngestArgs),
    /// Produce annotations from a remote rater, an import file, or the mock.
    Annotate(AnnotateArgs),
    /// Select a token-budgeted subset and write its manifest.
    Sample(SampleArgs),
    /// Corpus statistics, distributions, accuracy, anomalies.
    Report(ReportArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    source: String,
    #[arg(long)]
    chunk_budget: Option<usize>,
    /// Tokenizer choice; only the whitespace+punctuation splitter is built
    /// in.
    #[arg(long, default_value = "whitespace")]
    tokenizer: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnnotateArgs {
    /// documents.jsonl to annotate.
    #[arg(long)]
    input: PathBuf,
    /// Remote rater base URL.
    #[arg(long)]
    endpoint: Option<String>,
    /// Precomputed annotations.jsonl to import.
    #[arg(long)]
    import: Option<PathBuf>,
    /// Use the deterministic offline mock rater.
    #[arg(long)]
    mock: bool,
    #[arg(long, value_enum, default_value_t = ModeArg::AllRating)]
    mode: ModeArg,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    #[arg(long)]
    out: PathBuf,
    /// Where per-document failures are written (default: <out>.failures).
    #[arg(long)]
    failures: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    AllRating,
    ScoreOnly,
    DomainOnly,
}

impl From<ModeArg> for PromptMode {
    fn from(m: ModeArg) -> PromptMode {
        match m {
            ModeArg::Full => PromptMode::Full,
            ModeArg::AllRating => PromptMode::AllRating,
            ModeArg::ScoreOnly => PromptMode::ScoreOnly,
            ModeArg::DomainOnly => PromptMode::DomainOnly,
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    documents: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    /// Criterion for criterion-weighted and temperature strategies.
    #[arg(long)]
    criterion: Option<String>,
    /// Level for the fixed-level strategy; min level for domain-filter.
    #[arg(long)]
    level: Option<u8>,
    #[arg(long)]
    tau: Option<f64>,
    /// Comma-separated domain names for domain-filter.
    #[arg(long)]
    domains: Option<String>,
    #[arg(long)]
    budget_tokens: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = StratifyArg::SourceAndDomain)]
    stratify: StratifyArg,
    #[arg(long, value_enum, default_value_t = ShortfallArg::Redistribute)]
    shortfall: ShortfallArg,
    /// Merge previously written manifests instead of sampling the corpus.
    #[arg(long, num_args = 1..)]
    merge: Option<Vec<PathBuf>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    CriterionWeighted,
    FixedLevel,
    Temperature,
    Uniform,
    PerplexityLowest,
    PerplexityHighest,
    DomainFilter,
}

#[derive(Clone, Copy, ValueEnum)]
enum StratifyArg {
    SourceAndDomain,
    SourceOnly,
    None,
}

impl From<StratifyArg> for Stratify {
    fn from(s: StratifyArg) -> Stratify {
        match s {
            StratifyArg::SourceAndDomain => Stratify::SourceAndDomain,
            StratifyArg::SourceOnly => Stratify::SourceOnly,
            StratifyArg::None => Stratify::None,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ShortfallArg {
    Error,
    Redistribute,
}

impl From<ShortfallArg> for Shortfall {
    fn from(s: ShortfallArg) -> Shortfall {
        match s {
            ShortfallArg::Error => Shortfall::Error,
            ShortfallArg::Redistribute => Shortfall::Redistribute,
        }
    }
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, value_enum)]
    report: ReportKind,
    #[arg(long)]
    documents: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Gold levels file (one integer per line) for the accuracy report.
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Predicted levels file for the accuracy report.
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Tail fraction for the anomalies report.
    #[arg(long, default_value_t = 0.02)]
    fraction: f64,
    #[arg(long, value_enum, default_value_t = GroupArg::Source)]
    group_by: GroupArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportKind {
    Summary,
    Distribution,
    NllCorrelation,
    Accuracy,
    Curation,
    Anomalies,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupArg {
    Source,
    Global,
}

fn diag(value: serde_json::Value) {
    eprintln!("{value}");
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn load_annotated(documents: &Path, annotations: &Path) -> Result<Vec<AnnotatedDocument>> {
    let (docs, doc_summary) = corpus::read_documents_jsonl(documents)?;
    let (anns, ann_summary) = rater::import_annotations(annotations)?;
    if doc_summary.skipped + ann_summary.skipped > 0 {
        diag(json!({
            "event": "skipped_lines",
            "documents": doc_summary.skipped,
            "annotations": ann_summary.skipped,
        }));
    }
    let report = corpus::attach_annotations(docs, anns)?;
    if !report.unmatched_docs.is_empty() || !report.unmatched_annotations.is_empty() {
        diag(json!({
            "event": "join_unmatched",
            "documents": report.unmatched_docs.len(),
            "annotations": report.unmatched_annotations.len(),
        }));
    }
    Ok(report.matched)
}

fn write_json(out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            serde_json::to_writer_pretty(&mut w, value)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        None => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}

fn parse_criterion(name: Option<&str>) -> Result<Criterion> {
    let name = name.context("--criterion is required for this strategy")?;
    Criterion::from_key(name).with_context(|| format!("unknown criterion: {name}"))
}

fn build_strategy(args: &SampleArgs) -> Result<Strategy> {
    Ok(match args.strategy {
        StrategyArg::CriterionWeighted => Strategy::CriterionWeighted {
            criterion: parse_criterion(args.criterion.as_deref())?,
        },
        StrategyArg::FixedLevel => Strategy::FixedLevel {
            level: args.level.context("--level is required for fixed-level")?,
        },
        StrategyArg::Temperature => Strategy::Temperature {
            criterion: parse_criterion(args.criterion.as_deref())?,
            tau: args.tau.context("--tau is required for temperature")?,
        },
        StrategyArg::Uniform => Strategy::Uniform,
        StrategyArg::PerplexityLowest => Strategy::Perplexity { highest: false },
        StrategyArg::PerplexityHighest => Strategy::Perplexity { highest: true },
        StrategyArg::DomainFilter => {
            let spec = args
                .domains
                .as_deref()
                .context("--domains is required for domain-filter")?;
            let mut domains = BTreeSet::new();
            for part in spec.split(',') {
                domains.insert(
                    DomainType::parse(part)
                        .with_context(|| format!("unknown domain: {part}"))?,
                );
            }
            Strategy::DomainFilter {
                domains,
                min_level: args.level.unwrap_or(5),
            }
        }
    })
}

fn cmd_ingest(args: &IngestArgs, cfg: &FileConfig, dry_run: bool) -> Result<()> {
    if args.tokenizer != "whitespace" {
        bail!("usage: unknown tokenizer {:?}", args.tokenizer);
    }
    let chunk_budget = args.chunk_budget.or(cfg.chunk_budget).unwrap_or(1024);
    if chunk_budget == 0 {
        bail!("usage: --chunk-budget must be >= 1");
    }
    if dry_run {
        write_json(
            None,
            &json!({
                "command": "ingest",
                "input": args.input,
                "source": args.source,
                "chunk_budget": chunk_budget,
                "tokenizer": args.tokenizer,
                "out": args.out,
            }),
        )?;
        return Ok(());
    }
    let (raws, summary) = corpus::ingest_jsonl(&args.input, &args.source)?;
    let tokenizer = WhitespacePunct;
    let docs: Vec<Document> = raws
        .par_iter()
        .flat_map_iter(|raw| corpus::chunk(raw, &tokenizer, chunk_budget))
        .collect();
    corpus::write_documents_jsonl(&args.out, &docs)?;
    diag(json!({
        "event": "ingest_done",
        "read": summary.read,
        "skipped": summary.skipped,
        "documents": docs.len(),
    }));
    for (line, detail) in summary.diagnostics.iter().take(20) {
        diag(json!({"event": "skipped_line", "line": line, "detail": detail}));
    }
    Ok(())
}

fn cmd_annotate(args: &AnnotateArgs, dry_run: bool) -> Result<()> {
    let chosen = [args.endpoint.is_some(), args.import.is_some(), args.mock]
        .iter()
        .filter(|&&b| b)
        .count();
    if chosen != 1 {
        bail!("usage: exactly one of --endpoint, --import, --mock");
    }
    if dry_run {
        write_json(
            None,
            &json!({
                "command": "annotate",
                "input": args.input,
                "backend": if args.mock { "mock" } else if args.import.is_some() { "import" } else { "endpoint" },
                "mode": PromptMode::from(args.mode).as_str(),
                "max_in_flight": args.max_in_flight,
                "max_retries": args.max_retries,
                "out": args.out,
            }),
        )?;
        return Ok(());
    }

    if let Some(import) = &args.import {
        let (records, summary) = rater::import_annotations(import)?;
        write_annotations(&args.out, &records)?;
        diag(json!({
            "event": "annotate_done",
            "imported": summary.read,
            "skipped": summary.skipped,
        }));
        return Ok(());
    }

    let (docs, _) = corpus::read_documents_jsonl(&args.input)?;
    if args.mock {
        let records: Vec<AnnotationRecord> = docs.par_iter().map(rater::mock_rate).collect();
        write_annotations(&args.out, &records)?;
        diag(json!({"event": "annotate_done", "annotated": records.len(), "failed": 0}));
        return Ok(());
    }

    let base_url = args.endpoint.clone().unwrap();
    let mut endpoint = RaterEndpoint::new(base_url, args.mode.into());
    endpoint.max_in_flight = args.max_in_flight;
    endpoint.max_retries = args.max_retries;
    endpoint.timeout = Duration::from_secs(120);
    let http = rater::HttpRater::new(endpoint.clone())?;
    let mut outcomes = rater::rate_batch(&docs, &http, &endpoint);
    outcomes.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    let records: Vec<AnnotationRecord> =
        outcomes.iter().filter_map(|o| o.record.clone()).collect();
    write_annotations(&args.out, &records)?;
    let failures_path = args
        .failures
        .clone()
        .unwrap_or_else(|| args.out.with_extension("failures.jsonl"));
    let mut fw = BufWriter::new(File::create(&failures_path)?);
    let mut failed = 0usize;
    for o in &outcomes {
        if o.failure.is_some() {
            serde_json::to_writer(&mut fw, o)?;
            fw.write_all(b"\n")?;
            failed += 1;
        }
    }
    fw.flush()?;
    diag(json!({
        "event": "annotate_done",
        "annotated": records.len(),
        "failed": failed,
    }));
    Ok(())
}

fn write_annotations(path: &Path, records: &[AnnotationRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_sample(args: &SampleArgs, cfg: &FileConfig, dry_run: bool) -> Result<()> {
    let budget = args
        .budget_tokens
        .or(cfg.budget_tokens)
        .context("usage: --budget-tokens is required")?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);

    if let Some(paths) = &args.merge {
        let manifests: Vec<sampler::SubsetManifest> = paths
            .iter()
            .map(|p| sampler::read_manifest(p))
            .collect::<Result<_, _>>()?;
        let merged = sampler::merge_subsets(&manifests, budget, seed)?;
        sampler::write_manifest(&args.out, &merged)?;
        println!("{}", merged.digest);
        return Ok(());
    }

    let strategy = build_strategy(args)?;
    let spec = SampleSpec {
        strategy,
        token_budget: budget,
        seed,
        stratify: args.stratify.into(),
        shortfall: args.shortfall.into(),
        restrict_to_top_rated: false,
    };
    if dry_run {
        write_json(None, &json!({"command": "sample", "spec": spec, "out": args.out}))?;
        return Ok(());
    }
    let corpus = load_annotated(&args.documents, &args.annotations)?;
    let joint = sampler::estimate_joint(&corpus)?;
    let manifest = sampler::sample(&corpus, &spec, &joint)?;
    sampler::write_manifest(&args.out, &manifest)?;
    diag(json!({
        "event": "sample_done",
        "selected": manifest.rows.len(),
        "total_tokens": manifest.total_tokens,
    }));
    println!("{}", manifest.digest);
    Ok(())
}

fn read_levels(path: &Path) -> Result<Vec<u8>> {
    let text = std::fs::read_to_string(path)?;
    text.split_whitespace()
        .map(|t| t.parse::<u8>().with_context(|| format!("bad level {t:?}")))
        .collect()
}

fn cmd_report(args: &ReportArgs, dry_run: bool) -> Result<()> {
    if dry_run {
        write_json(None, &json!({"command": "report"}))?;
        return Ok(());
    }
    let need_corpus = !matches!(args.report, ReportKind::Accuracy);
    let corpus: Vec<AnnotatedDocument> = if need_corpus && !matches!(args.report, ReportKind::Anomalies) {
        let documents = args.documents.as_deref().context("usage: --documents required")?;
        let annotations = args
            .annotations
            .as_deref()
            .context("usage: --annotations required")?;
        load_annotated(documents, annotations)?
    } else {
        Vec::new()
    };

    let value = match args.report {
        ReportKind::Summary => {
            let stats = corpus::corpus_summary(&corpus);
            serde_json::to_value(&stats)?
        }
        ReportKind::Distribution => {
            serde_json::to_value(analytics::rating_distribution(&corpus))?
        }
        ReportKind::NllCorrelation => {
            serde_json::to_value(analytics::criterion_nll_correlation(&corpus))?
        }
        ReportKind::Curation => serde_json::to_value(curate::curation_report(&corpus))?,
        ReportKind::Accuracy => {
            let gold = read_levels(args.gold.as_deref().context("usage: --gold required")?)?;
            let pred = read_levels(args.pred.as_deref().context("usage: --pred required")?)?;
            serde_json::to_value(analytics::accuracy_report(&gold, &pred)?)?
        }
        ReportKind::Anomalies => {
            let documents = args.documents.as_deref().context("usage: --documents required")?;
            let (docs, _) = corpus::read_documents_jsonl(documents)?;
            let group_by = match args.group_by {
                GroupArg::Source => GroupBy::Source,
                GroupArg::Global => GroupBy::Global,
            };
            let sets = anomaly::extract_anomalies(&docs, args.fraction, group_by)?;
            serde_json::to_value(&sets)?
        }
    };
    write_json(args.out.as_deref(), &value)
}

fn is_usage_error(err: &anyhow::Error) -> bool {
    err.to_string().starts_with("usage:")
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let cfg = match load_config(cli.config.as_deref()) {
        Ok(cfg) => cfg,
        Err(err) => {
            diag(json!({"event": "fatal", "error": format!("{err:#}")}));
            return ExitCode::from(2);
        }
    };
    if let Some(workers) = cli.workers.or(cfg.workers) {
        // A pre-initialized global pool is fine; the cap is best-effort.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    let result = match &cli.command {
        Command::Ingest(args) => cmd_ingest(args, &cfg, cli.dry_run),
        Command::Annotate(args) => cmd_annotate(args, cli.dry_run),
        Command::Sample(args) => cmd_sample(args, &cfg, cli.dry_run),
        Command::Report(args) => cmd_report(args, cli.dry_run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = if is_usage_error(&err) { 2 } else { 1 };
            diag(json!({"event": "fatal", "error": format!("{err:#}")}));
            ExitCode::from(code)
        }
    }
}
