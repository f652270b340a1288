//! Pipeline stages as subcommands, plus the annotation HTTP service.

pub mod commands;
pub mod service;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use taxoq_core::generator::SerializationMode;
use taxoq_core::Skill;

#[derive(Debug, Parser)]
#[command(name = "taxoq", version, about = "Skill-conditioned question generation pipeline")]
pub struct Cli {
    /// Seed for every stochastic stage.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize one dataset split to sample JSONL.
    Ingest(IngestArgs),
    /// Elicit question focuses and knowledge into a cache.
    Elicit(ElicitArgs),
    /// Train the question generator.
    TrainQg(TrainQgArgs),
    /// Generate questions with a trained generator.
    Generate(GenerateArgs),
    /// Train the context skill classifier.
    TrainSkillClf(TrainClfArgs),
    /// Extract (context, skill, answer) triples from raw contexts.
    Extract(ExtractArgs),
    /// Build a QA training set with synthetic questions.
    Augment(AugmentArgs),
    /// Score generated questions against gold questions.
    Evaluate(EvaluateArgs),
    /// Train and score the small extractive QA model.
    QaEval(QaEvalArgs),
    /// Build an annotation bundle from generated questions.
    Bundle(BundleArgs),
    /// Serve annotation tasks over HTTP.
    ServeAnnotation(ServeArgs),
    /// Aggregate a judgment log offline.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Dataset directory or normalized JSONL file.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ElicitArgs {
    /// JSONL with a `context` field and optionally a `skill`.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Elicit for this skill only; otherwise the record's skill, or all five.
    #[arg(long)]
    pub skill: Option<Skill>,
    /// Extra plain-text files the n-gram language model is trained on.
    #[arg(long = "lm-corpus")]
    pub lm_corpus: Vec<PathBuf>,
    /// Chains kept per (context, skill), best first.
    #[arg(long, default_value_t = 1)]
    pub keep: usize,
    #[arg(long, default_value = "elicitation_cache.jsonl")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainQgArgs {
    /// Training samples (JSONL).
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Elicitation cache; without it inputs carry no focus or knowledge.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long, default_value = "full")]
    pub mode: SerializationMode,
    /// Artifact directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 500)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 384)]
    pub max_sequence_length: usize,
    #[arg(long, default_value_t = 128)]
    pub d_model: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    /// Dev records decoded at each evaluation; 0 means all.
    #[arg(long, default_value_t = 50)]
    pub dev_limit: usize,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Artifact directory written by train-qg.
    #[arg(long)]
    pub model: PathBuf,
    /// JSONL with `context`, `answer` and `skill`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Generate for each of the five skills instead of the record's skill.
    #[arg(long)]
    pub all_skills: bool,
    #[arg(long, default_value_t = 8)]
    pub beam_size: usize,
    /// Keep only the best beam.
    #[arg(long)]
    pub top_only: bool,
    #[arg(long, default_value_t = 32)]
    pub max_question_tokens: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainClfArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// JSONL with a `context` field.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Classifier written by train-skill-clf.
    #[arg(long)]
    pub classifier: PathBuf,
    #[arg(long, default_value_t = taxoq_core::extraction::DEFAULT_THRESHOLD, value_parser = open_unit_interval)]
    pub threshold: f64,
    /// Frozen NER/SRL annotations (JSONL) instead of the rule-based taggers.
    #[arg(long)]
    pub frozen: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Original training samples.
    #[arg(long)]
    pub base: PathBuf,
    #[arg(long)]
    pub triples: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Synthetic questions drawn from the pool.
    #[arg(long)]
    pub n_select: usize,
    #[arg(long, default_value_t = 8)]
    pub beam_size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub generated: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    /// Metric configuration (TOML); the bundled one otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "report.txt")]
    pub out: PathBuf,
    /// Per-sample scores; defaults to the report path with `.samples.jsonl`.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QaEvalArgs {
    /// QA training records (samples or augment output).
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BundleArgs {
    /// `name=path` of a generated-question file; repeat per system.
    #[arg(long = "system", required = true, value_parser = system_entry)]
    pub systems: Vec<(String, PathBuf)>,
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long, default_value_t = 300)]
    pub n_samples: usize,
    #[arg(long, value_delimiter = ',', default_value = "PAIRWISE,SKILL,KNOWLEDGE")]
    pub kinds: Vec<taxoq_core::annotation::TaskKind>,
    /// Annotator ids, comma separated; needed with --overlap.
    #[arg(long, value_delimiter = ',')]
    pub annotators: Vec<String>,
    /// Annotators per task; full overlap when absent.
    #[arg(long, requires = "annotators")]
    pub overlap: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Append-only judgment log.
    #[arg(long)]
    pub store_path: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Shared bearer token; requests are unauthenticated without it.
    #[arg(long, env = "TAXOQ_TOKEN")]
    pub token: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub store_path: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Table,
    Json,
}

fn open_unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is outside (0, 1)"))
    }
}

fn system_entry(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.trim().is_empty() && !path.is_empty() => {
            Ok((name.trim().to_string(), PathBuf::from(path)))
        }
        _ => Err(format!("expected name=path, got {s:?}")),
    }
}

/// Parses `args` and runs the command. Returns the process exit status:
/// 0 on success, 1 on a failed command, 2 on a usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
