use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use lexkit::corpus::{compute_stats, ingest, Corpus, CorpusManifest, IngestOptions, Split, SplitFilter};
use lexkit::evaluator::{build_candidate_set, eval_task, CandidateSet, EvalOptions};
use lexkit::jsonl::load_jsonl;
use lexkit::mlm::{eval_mlm, MlmEvalConfig, MlmReport};
use lexkit::probes::{build_probes, validate_probes, BuildOptions, MatchPolicy, ProbeInstance, TermVocabulary};
use lexkit::report::{
    aggregate, compare, complexity_curve, curve_csv, render_comparison, render_mlm, render_task,
    AggregateOptions, ClusterWeighting, Format, Metric,
};
use lexkit::sampler::{sample_stream, smoothed_rates, CorpusUnits, SamplingUnit, UnitSource};
use lexkit::scorer::{self, Scorer, TokenizeMode};
use lexkit::transfer::{plan_embedding_transfer, Vocab};
use lexkit::{InstanceResult, TaskReport};

use crate::output::{header, write_json, write_records, write_text, CommentStyle};
use crate::Usage;

#[derive(Debug, Parser)]
#[command(name = "lexkit", version, about = "Cloze probes, masked-LM evaluation and smoothed corpus sampling")]
pub struct Cli {
    /// Worker threads (0: one per processor).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Document and token counts per sub-corpus.
    Stats(StatsArgs),
    /// Smoothed sampling plan and an interleaved sample stream.
    Sample(SampleArgs),
    /// Cloze instances from the test split for one term vocabulary.
    BuildProbes(BuildProbesArgs),
    /// Rank gold sub-tokens among the task's candidates.
    EvalProbes(EvalProbesArgs),
    /// Masked-token accuracy per sub-corpus.
    EvalMlm(EvalMlmArgs),
    /// Macro MRR / P@1 tables, model ranks and the label-complexity curve.
    Report(ReportArgs),
    /// Embedding reuse plan between two tokenizer vocabularies.
    TransferPlan(TransferArgs),
    /// Serve a built-in scorer over HTTP or stdio.
    Serve(ServeArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct CorpusArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Fail on malformed JSONL lines instead of skipping them.
    #[arg(long)]
    pub strict: bool,
    #[arg(long, default_value_t = 0.1)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TextFormat {
    Json,
    Csv,
    Markdown,
}

impl From<TextFormat> for Format {
    fn from(f: TextFormat) -> Self {
        match f {
            TextFormat::Json => Format::Json,
            TextFormat::Csv => Format::Csv,
            TextFormat::Markdown => Format::Markdown,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,
    /// Add a smoothed sampling column for this exponent.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum, default_value = "markdown")]
    pub format: TextFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitArg {
    Document,
    Chunk,
    Sentence,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    All,
    Train,
    Test,
}

impl From<SplitArg> for SplitFilter {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::All => SplitFilter::All,
            SplitArg::Train => SplitFilter::Only(Split::Train),
            SplitArg::Test => SplitFilter::Only(Split::Test),
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, default_value_t = lexkit::sampler::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Units to draw; without `--out` only the plan is printed.
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, value_enum, default_value = "chunk")]
    pub unit: UnitArg,
    #[arg(long, default_value_t = 1000)]
    pub window_chars: usize,
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct BuildProbesArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = lexkit::probes::DEFAULT_WINDOW_CHARS)]
    pub window_chars: usize,
    /// Reservoir cap per label (0: keep all).
    #[arg(long, default_value_t = lexkit::probes::DEFAULT_MAX_PER_LABEL)]
    pub max_per_label: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep paragraphs that mention several terms.
    #[arg(long)]
    pub keep_multi: bool,
    /// Match terms regardless of case (overrides the vocabulary).
    #[arg(long)]
    pub case_insensitive: bool,
    /// Coverage and validation summary (JSON).
    #[arg(long)]
    pub coverage: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    WithLeadingSpace,
    Standalone,
}

impl From<ModeArg> for TokenizeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::WithLeadingSpace => TokenizeMode::WithLeadingSpace,
            ModeArg::Standalone => TokenizeMode::Standalone,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ScorerArg {
    /// http://host:port, stdio:<command>, hash:seed=..,vocab=..,max=.. or table:<path>
    #[arg(long, env = "LEXKIT_SCORER_URL")]
    pub scorer: String,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalProbesArgs {
    #[arg(long)]
    pub probes: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub scorer: ScorerArg,
    #[arg(long)]
    pub out: PathBuf,
    /// P@1 counts only when every sub-token ranks first.
    #[arg(long)]
    pub strict_p1: bool,
    #[arg(long, value_enum, default_value = "with-leading-space")]
    pub mode: ModeArg,
    /// Candidate-set cache; built and saved when missing.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Recorded in the output header; evaluation itself draws nothing.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalMlmArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub scorer: ScorerArg,
    #[arg(long, default_value_t = 0.15)]
    pub rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Chunks per sub-corpus (0: all).
    #[arg(long, default_value_t = 1000)]
    pub max_chunks: usize,
    #[arg(long, default_value_t = 256)]
    pub chunk_tokens: usize,
    #[arg(long, default_value_t = 1000)]
    pub window_chars: usize,
    #[arg(long, value_enum, default_value = "json")]
    pub format: TextFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricArg {
    Mrr,
    P1,
    Both,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Instance results (JSONL); several files and models may be combined.
    #[arg(long, num_args = 1.., required_unless_present = "mlm")]
    pub results: Vec<PathBuf>,
    /// Term vocabularies of the reported tasks.
    #[arg(long, num_args = 1.., required_unless_present = "mlm")]
    pub vocab: Vec<PathBuf>,
    /// Masked-token accuracy reports to tabulate instead.
    #[arg(long, num_args = 1.., conflicts_with_all = ["results", "vocab"])]
    pub mlm: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "markdown")]
    pub format: TextFormat,
    #[arg(long, value_enum, default_value = "both")]
    pub metric: MetricArg,
    /// Weight cluster means by instance counts.
    #[arg(long)]
    pub weighted_clusters: bool,
    /// Label-complexity curve (CSV).
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TransferArgs {
    /// Old vocabulary: JSON map of token string to id.
    #[arg(long)]
    pub old: PathBuf,
    #[arg(long)]
    pub new: PathBuf,
    /// Plan entries (JSONL).
    #[arg(long)]
    pub out: PathBuf,
    /// Summary (JSON); printed to stdout when omitted.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub scorer: ScorerArg,
    /// Listen address, e.g. 127.0.0.1:8080 (port 0 picks one).
    #[arg(long, conflicts_with = "stdio", required_unless_present = "stdio")]
    pub http: Option<String>,
    /// Answer framed requests on stdin/stdout.
    #[arg(long)]
    pub stdio: bool,
    #[arg(long, default_value_t = 4)]
    pub threads: usize,
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Stats(a) => stats(&a),
        Command::Sample(a) => sample(&a),
        Command::BuildProbes(a) => build(&a),
        Command::EvalProbes(a) => eval_probes(&a),
        Command::EvalMlm(a) => mlm(&a),
        Command::Report(a) => report(&a),
        Command::TransferPlan(a) => transfer(&a),
        Command::Serve(a) => serve(&a),
    }
}

fn open_corpus(a: &CorpusArgs) -> Result<Corpus> {
    let manifest = CorpusManifest::load(&a.manifest)?;
    let options = IngestOptions {
        strict: a.strict,
        test_fraction: a.test_fraction,
        split_seed: a.split_seed,
    };
    Ok(ingest(manifest, options)?)
}

fn warn_malformed(corpus: &Corpus) {
    let n = corpus.malformed_lines();
    if n > 0 {
        log::warn!("skipped {n} malformed line(s)");
    }
}

fn connect(arg: &ScorerArg) -> Result<Arc<dyn Scorer>> {
    scorer::connect(&arg.scorer).with_context(|| format!("scorer `{}`", arg.scorer))
}

fn stats(a: &StatsArgs) -> Result<()> {
    let corpus = open_corpus(&a.corpus)?;
    let stats = compute_stats(&corpus)?;
    warn_malformed(&corpus);
    let plan = match (a.alpha, stats.shares()) {
        (Some(alpha), Some(shares)) => Some(smoothed_rates(&shares, alpha)?),
        (Some(_), None) => return Err(Usage("corpus holds no tokens; shares are undefined".into()).into()),
        (None, _) => None,
    };
    let h = header("stats", None, a)?;
    match a.format {
        TextFormat::Markdown => {
            let md = stats.to_markdown(plan.as_ref().map(|p| p.rates.as_slice()));
            write_text(a.out.as_deref(), &h, CommentStyle::Html, &md)
        }
        TextFormat::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                stats: &'a lexkit::corpus::CorpusStats,
                sampling: Option<&'a lexkit::SamplingPlan>,
            }
            write_json(a.out.as_deref(), &h, &Doc { stats: &stats, sampling: plan.as_ref() })
        }
        TextFormat::Csv => Err(Usage("stats supports json and markdown".into()).into()),
    }
}

fn sample(a: &SampleArgs) -> Result<()> {
    let corpus = open_corpus(&a.corpus)?;
    let stats = compute_stats(&corpus)?;
    let shares = stats
        .shares()
        .ok_or_else(|| Usage("corpus holds no tokens; shares are undefined".into()))?;
    let plan = smoothed_rates(&shares, a.alpha)?;
    let ids: Vec<&str> = stats.subcorpora.iter().map(|s| s.subcorpus_id.as_str()).collect();

    #[derive(Serialize)]
    struct PlanDoc<'a> {
        subcorpora: &'a [&'a str],
        shares: &'a [f64],
        alpha: f64,
        rates: &'a [f64],
    }
    let h = header("sampling-plan", Some(a.seed), a)?;
    write_json(
        None,
        &h,
        &PlanDoc {
            subcorpora: &ids,
            shares: &plan.shares,
            alpha: plan.alpha,
            rates: &plan.rates,
        },
    )?;

    let Some(out) = &a.out else {
        return Ok(());
    };
    let unit = match a.unit {
        UnitArg::Document => SamplingUnit::Document,
        UnitArg::Chunk => SamplingUnit::Chunk,
        UnitArg::Sentence => SamplingUnit::Sentence,
    };
    if unit == SamplingUnit::Chunk && a.window_chars < lexkit::corpus::MIN_WINDOW_CHARS {
        return Err(Usage(format!(
            "--window-chars must be at least {}",
            lexkit::corpus::MIN_WINDOW_CHARS
        ))
        .into());
    }
    let streams: Vec<(String, Box<dyn UnitSource>)> = corpus
        .entries()
        .iter()
        .map(|entry| {
            let source = CorpusUnits {
                corpus: corpus.clone(),
                entry: entry.clone(),
                unit,
                window_chars: a.window_chars,
                filter: a.split.into(),
            };
            (entry.subcorpus_id.clone(), Box::new(source) as Box<dyn UnitSource>)
        })
        .collect();
    let mut stream = sample_stream(streams, &plan, a.seed, a.count)?;
    let draws = stream.by_ref().collect::<lexkit::Result<Vec<_>>>()?;
    for (id, wraps) in stream.wraps() {
        if wraps > 0 {
            log::info!("{id}: wrapped {wraps} time(s)");
        }
    }
    warn_malformed(&corpus);
    write_records(Some(out), &header("sample", Some(a.seed), a)?, &draws)
}

fn build(a: &BuildProbesArgs) -> Result<()> {
    let corpus = open_corpus(&a.corpus)?;
    let mut vocab = TermVocabulary::load(&a.vocab)?;
    if a.case_insensitive {
        vocab.match_policy = MatchPolicy::CaseInsensitive;
    }
    let options = BuildOptions {
        window_chars: a.window_chars,
        max_per_label: (a.max_per_label > 0).then_some(a.max_per_label),
        seed: a.seed,
        skip_multi_occurrence: !a.keep_multi,
    };
    let built = build_probes(&corpus, &vocab, &options)?;
    let validation = validate_probes(&built.instances, &vocab)?;
    if !validation.violations.is_empty() {
        anyhow::bail!(
            "built instances violate {} invariant(s); first: {:?}",
            validation.violations.len(),
            validation.violations[0]
        );
    }
    warn_malformed(&corpus);
    for label in &built.coverage.missing_labels {
        log::warn!("label `{label}` has no instance");
    }
    log::info!("{}: {} instance(s)", vocab.task_id, built.instances.len());
    let h = header("probes", Some(a.seed), a)?;
    if let Some(path) = &a.coverage {
        #[derive(Serialize)]
        struct Doc<'a> {
            coverage: &'a lexkit::probes::CoverageSummary,
            validation: &'a lexkit::probes::ValidationReport,
        }
        let ch = header("coverage", Some(a.seed), a)?;
        write_json(Some(path), &ch, &Doc { coverage: &built.coverage, validation: &validation })?;
    }
    write_records(Some(&a.out), &h, &built.instances)
}

fn candidate_set(a: &EvalProbesArgs, vocab: &TermVocabulary, scorer: &dyn Scorer) -> Result<CandidateSet> {
    let mode = a.mode.into();
    if let Some(path) = &a.candidates {
        if path.exists() {
            let cset = CandidateSet::load(path, &scorer.info()?)?;
            if cset.task_id != vocab.task_id || cset.mode != mode {
                return Err(Usage(format!(
                    "{} was built for another task or tokenization mode",
                    path.display()
                ))
                .into());
            }
            return Ok(cset);
        }
    }
    let cset = build_candidate_set(vocab, scorer, mode)?;
    if let Some(path) = &a.candidates {
        cset.save(path)?;
    }
    Ok(cset)
}

fn eval_probes(a: &EvalProbesArgs) -> Result<()> {
    let vocab = TermVocabulary::load(&a.vocab)?;
    let (_, instances): (_, Vec<ProbeInstance>) = load_jsonl(&a.probes)?;
    let scorer = connect(&a.scorer)?;
    let cset = candidate_set(a, &vocab, scorer.as_ref())?;
    let options = EvalOptions { strict_p1: a.strict_p1 };
    let evaluation = eval_task::<f64>(&instances, &cset, scorer.as_ref(), options)?;
    let s = &evaluation.summary;
    log::info!(
        "{}: evaluated {}, skipped {}, errored {}, truncated {}",
        vocab.task_id,
        s.evaluated,
        s.skipped,
        s.errored,
        s.truncated
    );
    for (id, err) in s.errors.iter().take(5) {
        log::warn!("{id}: {err}");
    }
    let h = header("results", Some(a.seed), a)?;
    if let Some(path) = &a.summary {
        write_json(Some(path), &header("eval-summary", Some(a.seed), a)?, s)?;
    }
    write_records(Some(&a.out), &h, &evaluation.results)
}

fn mlm(a: &EvalMlmArgs) -> Result<()> {
    let corpus = open_corpus(&a.corpus)?;
    let scorer = connect(&a.scorer)?;
    let config = MlmEvalConfig {
        mask_rate: a.rate,
        max_chunks: (a.max_chunks > 0).then_some(a.max_chunks),
        seed: a.seed,
        chunk_tokens: a.chunk_tokens,
        window_chars: a.window_chars,
    };
    let report = eval_mlm(&corpus, &config, scorer.as_ref())?;
    warn_malformed(&corpus);
    let h = header("mlm", Some(a.seed), a)?;
    match a.format {
        TextFormat::Json => write_json(a.out.as_deref(), &h, &report),
        TextFormat::Markdown => write_text(
            a.out.as_deref(),
            &h,
            CommentStyle::Html,
            &render_mlm(std::slice::from_ref(&report), Format::Markdown)?,
        ),
        TextFormat::Csv => write_text(
            a.out.as_deref(),
            &h,
            CommentStyle::Hash,
            &render_mlm(std::slice::from_ref(&report), Format::Csv)?,
        ),
    }
}

fn load_mlm(path: &Path) -> Result<MlmReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)?;
    if let Some(map) = value.as_object_mut() {
        map.remove("_header");
    }
    serde_json::from_value(value).with_context(|| format!("{} is not an MLM report", path.display()))
}

fn report(a: &ReportArgs) -> Result<()> {
    let format: Format = a.format.into();
    let style = match a.format {
        TextFormat::Csv => CommentStyle::Hash,
        _ => CommentStyle::Html,
    };
    if !a.mlm.is_empty() {
        let reports = a.mlm.iter().map(|p| load_mlm(p)).collect::<Result<Vec<_>>>()?;
        let body = render_mlm(&reports, format)?;
        let h = header("mlm-report", None, a)?;
        return match format {
            Format::Json => {
                let value: serde_json::Value = serde_json::from_str(&body)?;
                write_json(a.out.as_deref(), &h, &value)
            }
            _ => write_text(a.out.as_deref(), &h, style, &body),
        };
    }

    let mut vocabs: BTreeMap<String, TermVocabulary> = BTreeMap::new();
    for path in &a.vocab {
        let v = TermVocabulary::load(path)?;
        if vocabs.insert(v.task_id.clone(), v).is_some() {
            return Err(Usage(format!("task given twice via --vocab ({})", path.display())).into());
        }
    }
    // (model, task) groups in first-appearance order.
    let mut groups: Vec<((String, String), Vec<InstanceResult>)> = Vec::new();
    for path in &a.results {
        let (_, rows): (_, Vec<InstanceResult>) = load_jsonl(path)?;
        for r in rows {
            let key = (r.model_id.clone(), r.task_id.clone());
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => v.push(r),
                None => groups.push((key, vec![r])),
            }
        }
    }
    if groups.is_empty() {
        return Err(Usage("no instance results found".into()).into());
    }
    let options = AggregateOptions {
        cluster_weighting: if a.weighted_clusters {
            ClusterWeighting::ByInstances
        } else {
            ClusterWeighting::Unweighted
        },
    };
    let mut tasks: Vec<TaskReport> = Vec::new();
    for ((model, task), rows) in &groups {
        let vocab = vocabs
            .get(task)
            .ok_or_else(|| Usage(format!("no --vocab given for task `{task}` (model `{model}`)")))?;
        tasks.push(aggregate(rows, vocab, options)?);
    }
    let metrics: &[Metric] = match a.metric {
        MetricArg::Mrr => &[Metric::Mrr],
        MetricArg::P1 => &[Metric::P1],
        MetricArg::Both => &[Metric::Mrr, Metric::P1],
    };
    let comparisons = metrics
        .iter()
        .map(|&m| compare(&tasks, m))
        .collect::<lexkit::Result<Vec<_>>>()?;

    if let Some(path) = &a.curve {
        let mut by_model: Vec<(String, Vec<InstanceResult>)> = Vec::new();
        for ((model, _), rows) in &groups {
            match by_model.iter_mut().find(|(m, _)| m == model) {
                Some((_, v)) => v.extend(rows.iter().cloned()),
                None => by_model.push((model.clone(), rows.clone())),
            }
        }
        let curves: Vec<_> = by_model
            .iter()
            .map(|(m, rows)| (m.clone(), complexity_curve(rows)))
            .collect();
        write_text(Some(path), &header("complexity-curve", None, a)?, CommentStyle::Hash, &curve_csv(&curves)?)?;
    }

    let h = header("report", None, a)?;
    match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                comparisons: &'a [lexkit::report::Comparison],
                tasks: &'a [TaskReport],
            }
            write_json(a.out.as_deref(), &h, &Doc { comparisons: &comparisons, tasks: &tasks })
        }
        Format::Markdown => {
            let mut body = String::new();
            for c in &comparisons {
                body.push_str(&render_comparison(c, format)?);
                body.push('\n');
            }
            for (i, t) in tasks.iter().enumerate() {
                if i > 0 {
                    body.push('\n');
                }
                body.push_str(&render_task(t, format)?);
            }
            write_text(a.out.as_deref(), &h, style, &body)
        }
        Format::Csv => {
            let mut body = String::new();
            for (i, t) in tasks.iter().enumerate() {
                let csv = render_task(t, format)?;
                let skip = if i == 0 { 0 } else { csv.find('\n').map_or(csv.len(), |n| n + 1) };
                body.push_str(&csv[skip..]);
            }
            write_text(a.out.as_deref(), &h, style, &body)
        }
    }
}

fn transfer(a: &TransferArgs) -> Result<()> {
    let old = Vocab::load(&a.old)?;
    let new = Vocab::load(&a.new)?;
    let plan = plan_embedding_transfer(&old, &new)?;
    write_records(Some(&a.out), &header("transfer-plan", None, a)?, &plan.entries)?;
    write_json(a.summary.as_deref(), &header("transfer-summary", None, a)?, &plan.summary)
}

fn serve(a: &ServeArgs) -> Result<()> {
    let scorer = connect(&a.scorer)?;
    if a.stdio {
        let stdin = std::io::stdin();
        let stdout = std::io::stdout();
        lexkit::scorer::serve_stdio(scorer.as_ref(), stdin.lock(), stdout.lock())?;
        return Ok(());
    }
    let addr = a.http.as_deref().expect("clap requires --http without --stdio");
    let server = lexkit::scorer::serve_http(scorer, addr, a.threads)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", server.url())?;
    out.flush()?;
    drop(out);
    server.join();
    Ok(())
}
