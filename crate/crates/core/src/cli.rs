//! Command-line surface: argument types and the command implementations the
//! `embedkit` binary dispatches to. Exit codes: 0 success, 2 invalid input,
//! 3 runtime failure.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adapters::{
    adapt_binary_classification, adapt_duplicates, adapt_multiclass, adapt_nli, adapt_retrieval,
    adapt_sts, pairs_to_relations, AdaptJob, DuplicatePair, LabeledRecord, NliRecord, PairRecord,
    Relation, StsRecord, TextRecord,
};
use crate::checkpoint::Checkpoint;
use crate::encoder::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::evalkit::{eval_bundle, render_table};
use crate::miner::{
    mine_dataset, DiscardReport, EmbeddingMatrix, MinerConfig, MiningJob, MiningQuery,
};
use crate::sample::{
    format_query, read_jsonl, read_samples, write_samples, InstructionMap, TextEmbedder,
};
use crate::sampler::{read_trace, write_trace, MultitaskSampler, SourceDataset};
use crate::trainer::{train, RunConfig, StepReport};

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const THREADS_ENV: &str = "EMBEDKIT_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "embedkit",
    version,
    about = "Train and evaluate text embedding models"
)]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a raw dataset family into training samples.
    Convert(ConvertArgs),
    /// Mine hard negatives for queries against a passage corpus.
    Mine(MineArgs),
    /// Train an encoder from a run configuration.
    Train(TrainArgs),
    /// Embed texts with a checkpoint; writes an embedding matrix.
    Embed(EmbedArgs),
    /// Evaluate a checkpoint on a task bundle directory.
    Eval(EvalArgs),
    /// Dump the sampler trace a run configuration would produce.
    Trace(TraceArgs),
    /// Summarize a metrics log or a trace dump.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Nli,
    Sts,
    Dup,
    Retrieval,
    Binary,
    Multiclass,
}

impl Family {
    fn default_instruction_key(self) -> &'static str {
        match self {
            Family::Nli => "nli",
            Family::Sts => "sts",
            Family::Dup => "duplicates",
            Family::Retrieval => "qa",
            Family::Binary => "polarity",
            Family::Multiclass => "topic",
        }
    }
}

/// Miner thresholds.
#[derive(Debug, Clone, Args)]
pub struct MinerArgs {
    /// Ranks retrieved per query.
    #[arg(long, default_value_t = 100)]
    pub top_k: usize,
    /// Leading ranks skipped as likely false negatives.
    #[arg(long, default_value_t = 5)]
    pub exclude_top: usize,
    /// Candidates must score strictly below this.
    #[arg(long, default_value_t = 0.8)]
    pub abs_ceiling: f64,
    /// Candidates must score strictly below this times the positive's score.
    #[arg(long, default_value_t = 0.95)]
    pub rel_factor: f64,
    /// Negatives per query; fewer survivors discard the query.
    #[arg(long, default_value_t = 24)]
    pub keep: usize,
}

impl MinerArgs {
    fn config(&self) -> MinerConfig {
        MinerConfig {
            top_k: self.top_k,
            exclude_top: self.exclude_top,
            abs_ceiling: self.abs_ceiling,
            rel_factor: self.rel_factor,
            keep: self.keep,
        }
    }
}

/// Teacher used for mining when no precomputed vectors are given.
#[derive(Debug, Clone, Args)]
pub struct TeacherArgs {
    /// Encoder checkpoint to embed with.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Hash buckets of a freshly initialized encoder (no checkpoint).
    #[arg(long, default_value_t = 65536)]
    pub buckets: usize,
    /// Embedding dimension of a freshly initialized encoder.
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Initialization seed of a freshly initialized encoder.
    #[arg(long, default_value_t = 0)]
    pub encoder_seed: u64,
}

impl TeacherArgs {
    fn load(&self) -> Result<EncoderParams> {
        match &self.checkpoint {
            Some(p) => Ok(Checkpoint::load(p)?.params),
            None => EncoderParams::init(EncoderConfig {
                buckets: self.buckets,
                dim: self.dim,
                max_tokens: EncoderConfig::default().max_tokens,
                seed: self.encoder_seed,
            }),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ConvertArgs {
    #[arg(long, value_enum)]
    pub family: Family,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Discard report (JSON). Defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Source name stamped on samples (default: input file stem).
    #[arg(long)]
    pub source: Option<String>,
    /// Task instruction (default: a built-in instruction for the family).
    #[arg(long)]
    pub instruction: Option<String>,
    #[command(flatten)]
    pub miner: MinerArgs,
    #[command(flatten)]
    pub teacher: TeacherArgs,
}

#[derive(Debug, Clone, Args)]
pub struct MineArgs {
    /// JSONL `{"id", "text"}`.
    #[arg(long)]
    pub queries: PathBuf,
    /// JSONL `{"id", "text"}`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// JSONL `{"query_id", "passage_id"}`.
    #[arg(long)]
    pub relations: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    /// Precomputed query vectors keyed by query id.
    #[arg(long, requires = "corpus_embeddings")]
    pub query_embeddings: Option<PathBuf>,
    /// Precomputed passage vectors keyed by passage id.
    #[arg(long, requires = "query_embeddings")]
    pub corpus_embeddings: Option<PathBuf>,
    #[arg(
        long,
        default_value = "Given a question, retrieve passages that answer the question."
    )]
    pub instruction: String,
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub miner: MinerArgs,
    #[command(flatten)]
    pub teacher: TeacherArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue from a checkpoint written by the same configuration.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Also write the sampler trace (JSONL) for the whole run.
    #[arg(long)]
    pub dump_trace: Option<PathBuf>,
    /// Override every seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// JSONL `{"id", "text"}`, or plain text with one input per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Embedding matrix; `.jsonl` writes `{"id", "vector"}` lines.
    #[arg(long)]
    pub out: PathBuf,
    /// Prefix every input with this instruction (queries only).
    #[arg(long)]
    pub instruction: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Task bundle directory containing `task.json`.
    #[arg(long, required = true, num_args = 1..)]
    pub task: Vec<PathBuf>,
    /// Write the metric reports as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TraceArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    #[arg(long, conflicts_with = "trace")]
    pub metrics: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Provenance of one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub inputs: Vec<FileDigest>,
    pub seed: u64,
    pub started_unix: u64,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn file_digest(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: sha256_hex(&bytes),
    })
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: serde_json::Value,
        inputs: &[&Path],
        seed: u64,
    ) -> Result<Self> {
        Ok(RunManifest {
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: sha256_hex(config.to_string().as_bytes()),
            config,
            inputs: inputs
                .iter()
                .map(|p| file_digest(p))
                .collect::<Result<_>>()?,
            seed,
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        })
    }

    /// Write via a temporary file and rename.
    pub fn write(&self, path: &Path) -> Result<()> {
        write_json_atomic(self, path)
    }
}

fn write_json_atomic<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_vec_pretty(value)?).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn default_source(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

/// Map an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_RUNTIME
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        // A second initialization in the same process is harmless.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match cli.command {
        Command::Convert(a) => cmd_convert(&a).map(|_| ()),
        Command::Mine(a) => cmd_mine(&a).map(|_| ()),
        Command::Train(a) => cmd_train(&a).map(|_| ()),
        Command::Embed(a) => cmd_embed(&a).map(|_| ()),
        Command::Eval(a) => {
            let reports = cmd_eval(&a)?;
            print!("{}", render_table(&reports));
            Ok(())
        }
        Command::Trace(a) => cmd_trace(&a).map(|_| ()),
        Command::Inspect(a) => {
            print!("{}", cmd_inspect(&a)?);
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvertSummary {
    pub samples: usize,
    pub report: DiscardReport,
}

pub fn cmd_convert(args: &ConvertArgs) -> Result<ConvertSummary> {
    let source = args
        .source
        .clone()
        .unwrap_or_else(|| default_source(&args.input));
    let instruction = match &args.instruction {
        Some(i) => i.clone(),
        None => InstructionMap::default()
            .get(args.family.default_instruction_key())
            .unwrap_or("Retrieve semantically similar text.")
            .to_string(),
    };
    let miner = args.miner.config();
    miner.validate()?;
    let config = serde_json::json!({
        "family": args.family,
        "source": source,
        "instruction": instruction,
        "miner": miner,
        "seed": args.seed,
        "teacher": teacher_description(&args.teacher),
    });
    RunManifest::new("convert", config, &[&args.input], args.seed)?
        .write(&manifest_path(&args.out))?;

    let job = AdaptJob {
        source: &source,
        instruction: &instruction,
        seed: args.seed,
        miner,
    };
    let (samples, report) = match args.family {
        Family::Binary => {
            let records: Vec<LabeledRecord> = read_jsonl(&args.input)?;
            let samples = adapt_binary_classification(&records, &source, &instruction)?;
            let report = DiscardReport {
                kept: samples.len(),
                ..Default::default()
            };
            (samples, report)
        }
        Family::Multiclass => {
            let records: Vec<LabeledRecord> = read_jsonl(&args.input)?;
            let out = adapt_multiclass(&records, miner.keep, args.seed, &source, &instruction)?;
            (out.samples, out.report)
        }
        family => {
            let teacher = args.teacher.load()?;
            let mined = match family {
                Family::Nli => adapt_nli(&read_jsonl::<NliRecord>(&args.input)?, &teacher, &job)?,
                Family::Sts => adapt_sts(&read_jsonl::<StsRecord>(&args.input)?, &teacher, &job)?,
                Family::Dup => {
                    adapt_duplicates(&read_jsonl::<DuplicatePair>(&args.input)?, &teacher, &job)?
                }
                Family::Retrieval => {
                    let pairs: Vec<PairRecord> = read_jsonl(&args.input)?;
                    let (q, p, r) = pairs_to_relations(&pairs);
                    adapt_retrieval(&q, &p, &r, &teacher, &job)?
                }
                Family::Binary | Family::Multiclass => unreachable!(),
            };
            (mined.samples, mined.report)
        }
    };
    write_samples(&samples, &args.out)?;
    let report_path = args.report.clone().unwrap_or_else(|| {
        let mut name = args.out.file_name().unwrap_or_default().to_os_string();
        name.push(".report.json");
        args.out.with_file_name(name)
    });
    write_json_atomic(&report, &report_path)?;
    log::info!(
        "converted {} samples, {} discarded",
        samples.len(),
        report.discarded
    );
    Ok(ConvertSummary {
        samples: samples.len(),
        report,
    })
}

fn teacher_description(t: &TeacherArgs) -> serde_json::Value {
    match &t.checkpoint {
        Some(p) => serde_json::json!({ "checkpoint": p }),
        None => serde_json::json!({
            "buckets": t.buckets,
            "dim": t.dim,
            "seed": t.encoder_seed,
        }),
    }
}

pub fn cmd_mine(args: &MineArgs) -> Result<ConvertSummary> {
    let miner = args.miner.config();
    miner.validate()?;
    let source = args
        .source
        .clone()
        .unwrap_or_else(|| default_source(&args.queries));
    let mut inputs: Vec<&Path> = vec![&args.queries, &args.corpus, &args.relations];
    let teacher_cfg = match (&args.query_embeddings, &args.corpus_embeddings) {
        (Some(q), Some(c)) => {
            inputs.push(q);
            inputs.push(c);
            serde_json::json!({ "query_embeddings": q, "corpus_embeddings": c })
        }
        _ => teacher_description(&args.teacher),
    };
    let config = serde_json::json!({
        "miner": miner,
        "instruction": args.instruction,
        "source": source,
        "seed": args.seed,
        "teacher": teacher_cfg,
    });
    RunManifest::new("mine", config, &inputs, args.seed)?.write(&manifest_path(&args.out))?;

    let queries: Vec<TextRecord> = read_jsonl(&args.queries)?;
    let passages: Vec<TextRecord> = read_jsonl(&args.corpus)?;
    let relations: Vec<Relation> = read_jsonl(&args.relations)?;
    if passages.is_empty() {
        return Err(Error::validation("corpus", "is empty"));
    }
    let job = AdaptJob {
        source: &source,
        instruction: &args.instruction,
        seed: args.seed,
        miner,
    };
    let mined = match (&args.query_embeddings, &args.corpus_embeddings) {
        (Some(qe), Some(ce)) => mine_precomputed(&queries, &passages, &relations, qe, ce, &job)?,
        _ => adapt_retrieval(&queries, &passages, &relations, &args.teacher.load()?, &job)?,
    };
    write_samples(&mined.samples, &args.out)?;
    write_json_atomic(&mined.report, &args.report)?;
    Ok(ConvertSummary {
        samples: mined.samples.len(),
        report: mined.report,
    })
}

/// Mining with vectors keyed by id instead of a live encoder.
fn mine_precomputed(
    queries: &[TextRecord],
    passages: &[TextRecord],
    relations: &[Relation],
    query_vectors: &Path,
    corpus_vectors: &Path,
    job: &AdaptJob<'_>,
) -> Result<crate::miner::MinedDataset> {
    let qm = EmbeddingMatrix::load(query_vectors)?;
    let cm = EmbeddingMatrix::load(corpus_vectors)?;
    let q_index = qm.index_of();
    let mut related: HashMap<&str, Vec<String>> = HashMap::new();
    for r in relations {
        related
            .entry(r.query_id.as_str())
            .or_default()
            .push(r.passage_id.clone());
    }
    let mining = queries
        .iter()
        .map(|q| {
            let row = q_index.get(q.id.as_str()).ok_or_else(|| {
                Error::validation(
                    "query_embeddings",
                    format!("no vector for query {:?}", q.id),
                )
            })?;
            Ok(MiningQuery {
                id: q.id.clone(),
                text: q.text.clone(),
                vector: crate::sample::Embedding::normalize(qm.row(*row).to_vec())?,
                related: related.remove(q.id.as_str()).unwrap_or_default(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some((q, _)) = related.iter().next() {
        return Err(Error::validation(
            "relations",
            format!("unknown query id {q:?}"),
        ));
    }
    let texts: HashMap<String, String> = passages
        .iter()
        .map(|p| (p.id.clone(), p.text.clone()))
        .collect();
    mine_dataset(
        &mining,
        &cm,
        &texts,
        &MiningJob {
            source: job.source,
            instruction: job.instruction,
            seed: job.seed,
            config: job.miner,
        },
    )
}

fn load_run(args_config: &Path, seed: Option<u64>) -> Result<(RunConfig, Vec<SourceDataset>)> {
    let mut run = RunConfig::load(args_config)?;
    if let Some(s) = seed {
        run.encoder.seed = s;
        run.sampler.seed = s;
        run.train.seed = s;
    }
    let base = args_config.parent().unwrap_or(Path::new("."));
    run.datasets = run
        .datasets
        .iter()
        .map(|p| {
            if p.is_absolute() {
                p.clone()
            } else {
                base.join(p)
            }
        })
        .collect();
    let mut samples = Vec::new();
    for p in &run.datasets {
        samples.extend(read_samples(p)?);
    }
    let datasets = SourceDataset::group_by_source(samples)?;
    Ok((run, datasets))
}

pub fn cmd_train(args: &TrainArgs) -> Result<Vec<StepReport>> {
    let (run, datasets) = load_run(&args.config, args.seed)?;
    let out_dir = args
        .out
        .clone()
        .or_else(|| run.output_dir.clone())
        .ok_or_else(|| Error::validation("out", "no output directory given"))?;
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let inputs: Vec<&Path> = std::iter::once(args.config.as_path())
        .chain(run.datasets.iter().map(PathBuf::as_path))
        .collect();
    RunManifest::new(
        "train",
        serde_json::to_value(&run)?,
        &inputs,
        run.train.seed,
    )?
    .write(&out_dir.join("manifest.json"))?;
    if let Some(trace_path) = &args.dump_trace {
        let trace = MultitaskSampler::new(&datasets, run.sampler, run.train.epochs)?.trace();
        write_trace(&trace, trace_path)?;
    }
    let resume = args.resume.as_deref().map(Checkpoint::load).transpose()?;
    let outcome = train(&run, &datasets, &out_dir, resume, |r| {
        log::info!(
            "step {} epoch {} lr {:.3e} loss {:.4} ({:.1} ms)",
            r.step,
            r.epoch,
            r.lr,
            r.combined,
            r.wall_ms
        );
    })?;
    Ok(outcome.reports)
}

fn read_embed_inputs(path: &Path) -> Result<Vec<TextRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<&str> = text.lines().collect();
    let looks_jsonl = lines
        .iter()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| serde_json::from_str::<TextRecord>(l).is_ok());
    if looks_jsonl {
        read_jsonl(path)
    } else {
        Ok(lines
            .iter()
            .enumerate()
            .map(|(i, l)| TextRecord {
                id: i.to_string(),
                text: l.to_string(),
            })
            .collect())
    }
}

pub fn cmd_embed(args: &EmbedArgs) -> Result<usize> {
    let params = Checkpoint::load(&args.checkpoint)?.params;
    let records = read_embed_inputs(&args.input)?;
    let entries = records
        .iter()
        .map(|r| {
            let text = match &args.instruction {
                Some(i) => format_query(i, &r.text)?,
                None => r.text.clone(),
            };
            Ok((r.id.clone(), params.embed(&text)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let matrix = EmbeddingMatrix::from_embeddings(entries)?;
    if args.out.extension().is_some_and(|e| e == "jsonl") {
        #[derive(Serialize)]
        struct Row<'a> {
            id: &'a str,
            vector: &'a [f64],
        }
        let rows: Vec<Row<'_>> = matrix
            .ids()
            .iter()
            .enumerate()
            .map(|(i, id)| Row {
                id,
                vector: matrix.row(i),
            })
            .collect();
        crate::sample::write_jsonl(&rows, &args.out)?;
    } else {
        matrix.save(&args.out)?;
    }
    Ok(matrix.len())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<Vec<crate::evalkit::MetricReport>> {
    let params = Checkpoint::load(&args.checkpoint)?.params;
    let mut reports = Vec::new();
    for dir in &args.task {
        reports.extend(eval_bundle(dir, &params)?);
    }
    if let Some(path) = &args.report {
        write_json_atomic(&reports, path)?;
    }
    Ok(reports)
}

pub fn cmd_trace(args: &TraceArgs) -> Result<usize> {
    let (run, datasets) = load_run(&args.config, None)?;
    let trace = MultitaskSampler::new(&datasets, run.sampler, run.train.epochs)?.trace();
    write_trace(&trace, &args.out)?;
    Ok(trace.len())
}

pub fn cmd_inspect(args: &InspectArgs) -> Result<String> {
    use std::fmt::Write as _;
    let mut out = String::new();
    if let Some(path) = &args.metrics {
        let reports: Vec<StepReport> = read_jsonl(path)?;
        let (Some(first), Some(last)) = (reports.first(), reports.last()) else {
            return Err(Error::validation("metrics", "log is empty"));
        };
        let _ = writeln!(out, "steps        {}", reports.len());
        let _ = writeln!(out, "first loss   {:.6}", first.combined);
        let _ = writeln!(out, "last loss    {:.6}", last.combined);
        let peak = reports.iter().map(|r| r.lr).fold(0.0, f64::max);
        let _ = writeln!(out, "peak lr      {peak:.3e}");
    } else if let Some(path) = &args.trace {
        let trace = read_trace(path)?;
        let steps = trace.iter().map(|t| t.step).max().unwrap_or(0);
        let epochs = trace.iter().map(|t| t.epoch).max().map_or(0, |e| e + 1);
        let _ = writeln!(out, "steps   {steps}");
        let _ = writeln!(out, "epochs  {epochs}");
        let mut per_source: std::collections::BTreeMap<&str, (usize, usize)> = Default::default();
        for t in &trace {
            let e = per_source.entry(t.source.as_str()).or_default();
            e.0 += 1;
            e.1 += t.sample_ids.len();
        }
        for (s, (batches, samples)) in per_source {
            let _ = writeln!(
                out,
                "{s:<24} {batches:>6} micro batches {samples:>8} samples"
            );
        }
    } else {
        return Err(Error::validation("inspect", "pass --metrics or --trace"));
    }
    Ok(out)
}
