use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde::Deserialize;
use taxoq_core::annotation::{create_annotation_bundle, AggregateReport, Bundle, BundleOptions, JudgmentStore};
use taxoq_core::corpus::{self, max_proportion_gap, skill_histogram, QASample};
use taxoq_core::extraction::{
    build_augmented_dataset, sample_combinations, train_skill_classifier, ClassifierConfig, ExtractionTriple,
    LogisticSkillClassifier,
};
use taxoq_core::generator::{
    GeneratedQuestion, GenerationConfig, GeneratorRecord, QuestionGenerator, SerializationMode, TrainingConfig,
};
use taxoq_core::jsonl;
use taxoq_core::metrics::{evaluate_corpus, MetricConfig, ScorerBinding, UnavailableScorer};
use taxoq_core::nlp::{CapitalizedEntityRecognizer, FrozenAnnotations, PastTenseRoleLabeler};
use taxoq_core::prompting::{CacheRecord, ElicitationCache, Elicitor, NgramLanguageModel, PromptError, ThoughtChain};
use taxoq_core::qa::{evaluate_qa, train_qa, QaConfig, QaExample};
use taxoq_core::templates::TemplateRegistry;
use taxoq_core::Skill;
use taxoq_seq2seq::{ModelConfig, Seq2SeqGenerator, TrainOptions};

use crate::*;

/// A line of an input file: a context, optionally with answer and skill.
/// Sample files and generated-question files both parse as this.
#[derive(Debug, Clone, Deserialize)]
pub struct InputRecord {
    pub context: String,
    #[serde(default)]
    pub answer: Option<String>,
    #[serde(default)]
    pub skill: Option<Skill>,
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Ingest(a) => ingest(&a),
        Command::Elicit(a) => elicit(&a, seed),
        Command::TrainQg(a) => train_qg(&a, seed),
        Command::Generate(a) => generate(&a),
        Command::TrainSkillClf(a) => train_clf(&a, seed),
        Command::Extract(a) => extract(&a),
        Command::Augment(a) => augment(&a, seed),
        Command::Evaluate(a) => evaluate(&a),
        Command::QaEval(a) => qa_eval(&a, seed),
        Command::Bundle(a) => bundle(&a, seed),
        Command::ServeAnnotation(a) => serve(&a),
        Command::Report(a) => report(&a),
    }
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    jsonl::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write<T: serde::Serialize>(path: &Path, records: &[T]) -> Result<()> {
    jsonl::write(path, records).with_context(|| format!("writing {}", path.display()))
}

fn load_cache(path: Option<&PathBuf>) -> Result<Option<ElicitationCache>> {
    path.map(|p| ElicitationCache::load(p).with_context(|| format!("reading {}", p.display())))
        .transpose()
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let samples = corpus::load_dataset(&a.dataset, &a.split)?;
    write(&a.out, &samples)?;
    println!("{} samples", samples.len());
    for (skill, n) in skill_histogram(&samples) {
        println!("{skill}\t{n}");
    }
    if let Some(gap) = max_proportion_gap(&samples) {
        println!("largest gap to the reference label distribution: {gap:.2} points");
    }
    Ok(())
}

/// Every (context, skill) the elicitor should cover, in input order.
fn elicitation_keys(records: &[InputRecord], skill: Option<Skill>) -> Vec<(String, Skill)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for r in records {
        let skills: Vec<Skill> = match skill.or(r.skill) {
            Some(s) => vec![s],
            None => Skill::ALL.to_vec(),
        };
        for s in skills {
            if seen.insert((r.context.clone(), s)) {
                out.push((r.context.clone(), s));
            }
        }
    }
    out
}

/// Elicits up to `keep` chains per (context, skill) with an n-gram model
/// trained on the contexts plus `lm_texts`. Keys for which nothing usable is
/// sampled are skipped with a warning.
pub fn elicit_cache(
    records: &[InputRecord],
    skill: Option<Skill>,
    lm_texts: &[String],
    keep: usize,
    seed: u64,
) -> Result<ElicitationCache> {
    let keys = elicitation_keys(records, skill);
    let registry = TemplateRegistry::bundled();
    let contexts: BTreeSet<&str> = keys.iter().map(|(c, _)| c.as_str()).collect();
    let lm = NgramLanguageModel::train(contexts.iter().copied().chain(lm_texts.iter().map(String::as_str)));
    let ner = CapitalizedEntityRecognizer;
    let elicitor = Elicitor::new(&registry, &lm, &ner, seed);
    let mut cache = ElicitationCache::default();
    for (context, skill) in &keys {
        match elicitor.chains(context, *skill) {
            Ok(chains) => {
                for chain in chains.iter().take(keep.max(1)) {
                    cache.insert(CacheRecord::from_chain(chain));
                }
            }
            Err(PromptError::EmptyResult { .. }) => warn!("no usable chain for skill {skill}"),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(cache)
}

fn elicit(a: &ElicitArgs, seed: u64) -> Result<()> {
    let records: Vec<InputRecord> = read(&a.input)?;
    let mut lm_texts = Vec::new();
    for p in &a.lm_corpus {
        lm_texts.push(std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?);
    }
    let cache = elicit_cache(&records, a.skill, &lm_texts, a.keep, seed)?;
    cache.save(&a.out)?;
    println!("{} chains written to {}", cache.len(), a.out.display());
    Ok(())
}

/// Best cached chain for (context, skill), if any.
pub fn cached_chain(
    cache: Option<&ElicitationCache>,
    registry: &TemplateRegistry,
    context: &str,
    skill: Skill,
) -> Result<Option<ThoughtChain>> {
    let Some(cache) = cache else { return Ok(None) };
    match cache.get(context, skill).and_then(<[CacheRecord]>::first) {
        Some(r) => Ok(Some(r.to_chain(context, registry)?)),
        None => {
            warn!("no cached chain for a {skill} input; using the bare context");
            Ok(None)
        }
    }
}

/// Generator training records from samples, with cached chains.
pub fn generator_records(
    samples: &[QASample],
    cache: Option<&ElicitationCache>,
    mode: SerializationMode,
) -> Result<Vec<GeneratorRecord>> {
    let registry = TemplateRegistry::bundled();
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let mut r = GeneratorRecord::new(&s.context, &s.answer, s.skill)
            .with_question(&s.question)
            .with_mode(mode);
        if let Some(chain) = cached_chain(cache, &registry, &s.context, s.skill)? {
            r = r.with_chain(chain);
        }
        out.push(r);
    }
    Ok(out)
}

fn train_qg(a: &TrainQgArgs, seed: u64) -> Result<()> {
    let cache = load_cache(a.cache.as_ref())?;
    let train: Vec<QASample> = read(&a.train)?;
    let dev: Vec<QASample> = a.dev.as_deref().map(read).transpose()?.unwrap_or_default();
    let records = generator_records(&train, cache.as_ref(), a.mode)?;
    let dev_records = generator_records(&dev, cache.as_ref(), a.mode)?;
    let opts = TrainOptions {
        training: TrainingConfig {
            peak_learning_rate: a.learning_rate,
            batch_size: a.batch_size,
            max_iterations: a.steps,
            max_sequence_length: a.max_sequence_length,
            eval_every: a.eval_every,
            seed,
            ..TrainingConfig::default()
        },
        model: ModelConfig {
            d_model: a.d_model,
            encoder_layers: a.layers,
            decoder_layers: a.layers,
            ff_dim: 2 * a.d_model,
            max_positions: a.max_sequence_length.max(ModelConfig::default().max_positions),
            ..ModelConfig::default()
        },
        vocab_texts: dev.iter().map(|s| s.context.clone()).collect(),
        dev_limit: a.dev_limit,
        output_dir: Some(a.out.clone()),
    };
    let outcome = taxoq_seq2seq::train(&records, &dev_records, &opts)?;
    let last = outcome.loss_log.last().map_or(f64::NAN, |e| e.loss);
    println!(
        "trained {} steps on {} records ({} skipped); final loss {last:.4}; kept step {}",
        outcome.loss_log.len(),
        records.len() - outcome.skipped,
        outcome.skipped,
        outcome.selected_step
    );
    for (step, score) in &outcome.dev_scores {
        println!("dev ROUGE-L at step {step}: {score:.4}");
    }
    Ok(())
}

/// Generates questions for every input; with `all_skills` each input is
/// asked once per skill.
pub fn generate_questions<G: QuestionGenerator + ?Sized>(
    generator: &G,
    mode: SerializationMode,
    inputs: &[InputRecord],
    cache: Option<&ElicitationCache>,
    all_skills: bool,
    cfg: &GenerationConfig,
) -> Result<Vec<GeneratedQuestion>> {
    let registry = TemplateRegistry::bundled();
    let mut out = Vec::new();
    for (line, input) in inputs.iter().enumerate() {
        let answer = input
            .answer
            .as_deref()
            .with_context(|| format!("input record {} has no answer", line + 1))?;
        let skills = match (all_skills, input.skill) {
            (true, _) => Skill::ALL.to_vec(),
            (false, Some(s)) => vec![s],
            (false, None) => bail!("input record {} has no skill (use --all-skills)", line + 1),
        };
        for skill in skills {
            let chain = cached_chain(cache, &registry, &input.context, skill)?;
            let mut record = GeneratorRecord::new(&input.context, answer, skill).with_mode(mode);
            if let Some(c) = &chain {
                record = record.with_chain(c.clone());
            }
            for cand in generator.generate(&record, cfg)? {
                out.push(GeneratedQuestion {
                    context: input.context.clone(),
                    answer: answer.to_string(),
                    skill,
                    question: cand.text,
                    beam_rank: cand.beam_rank,
                    score: cand.score,
                    focus: chain.as_ref().map(|c| c.focus.text.clone()),
                    knowledge: chain.as_ref().map(|c| c.knowledge.text.clone()),
                    mode,
                });
            }
        }
    }
    Ok(out)
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let generator = Seq2SeqGenerator::load(&a.model)?;
    let cache = load_cache(a.cache.as_ref())?;
    let inputs: Vec<InputRecord> = read(&a.input)?;
    let cfg = GenerationConfig {
        beam_size: a.beam_size,
        max_question_tokens: a.max_question_tokens,
        keep_all_beams: !a.top_only,
    };
    let questions = generate_questions(&generator, generator.mode(), &inputs, cache.as_ref(), a.all_skills, &cfg)?;
    write(&a.out, &questions)?;
    println!("{} questions written to {}", questions.len(), a.out.display());
    Ok(())
}

fn train_clf(a: &TrainClfArgs, seed: u64) -> Result<()> {
    let train: Vec<QASample> = read(&a.train)?;
    let dev: Vec<QASample> = a.dev.as_deref().map(read).transpose()?.unwrap_or_default();
    let cfg = ClassifierConfig {
        epochs: a.epochs,
        seed,
        ..ClassifierConfig::default()
    };
    let (clf, report) = train_skill_classifier(&train, &dev, &cfg)?;
    std::fs::write(&a.out, serde_json::to_string(&clf)?).with_context(|| format!("writing {}", a.out.display()))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn extract(a: &ExtractArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.classifier).with_context(|| format!("reading {}", a.classifier.display()))?;
    let clf: LogisticSkillClassifier = serde_json::from_str(&text)?;
    let records: Vec<InputRecord> = read(&a.input)?;
    let contexts: Vec<&str> = {
        let mut seen = BTreeSet::new();
        records.iter().map(|r| r.context.as_str()).filter(|c| seen.insert(*c)).collect()
    };
    let mut triples = Vec::new();
    match &a.frozen {
        Some(path) => {
            let frozen = FrozenAnnotations::load(path)?;
            for c in &contexts {
                triples.extend(sample_combinations(c, &clf, a.threshold, &frozen, &frozen)?);
            }
        }
        None => {
            let (ner, srl) = (CapitalizedEntityRecognizer, PastTenseRoleLabeler::default());
            for c in &contexts {
                triples.extend(sample_combinations(c, &clf, a.threshold, &ner, &srl)?);
            }
        }
    }
    write(&a.out, &triples)?;
    println!("{} triples from {} contexts", triples.len(), contexts.len());
    Ok(())
}

fn augment(a: &AugmentArgs, seed: u64) -> Result<()> {
    let base: Vec<QASample> = read(&a.base)?;
    let triples: Vec<ExtractionTriple> = read(&a.triples)?;
    let generator = Seq2SeqGenerator::load(&a.model)?;
    let cache = load_cache(a.cache.as_ref())?;
    let registry = TemplateRegistry::bundled();
    let cfg = GenerationConfig {
        beam_size: a.beam_size,
        ..GenerationConfig::default()
    };
    let mut lookup_error = None;
    let dataset = build_augmented_dataset(
        &base,
        &triples,
        |t| {
            let mut record = GeneratorRecord::new(&t.context, &t.answer.text, t.skill).with_mode(generator.mode());
            match cached_chain(cache.as_ref(), &registry, &t.context, t.skill) {
                Ok(Some(chain)) => record = record.with_chain(chain),
                Ok(None) => {}
                Err(e) => {
                    lookup_error.get_or_insert(e);
                }
            }
            generator.generate(&record, &cfg)
        },
        a.n_select,
        seed,
    )?;
    if let Some(e) = lookup_error {
        return Err(e);
    }
    let records: Vec<_> = dataset.records().cloned().collect();
    write(&a.out, &records)?;
    println!(
        "{} base + {} synthetic records (pool of {})",
        dataset.base.len(),
        dataset.synthetic.len(),
        dataset.pool_size
    );
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let config = match &a.config {
        Some(p) => MetricConfig::load(p)?,
        None => MetricConfig::bundled(),
    };
    let generated: Vec<GeneratedQuestion> = read(&a.generated)?;
    let gold: Vec<QASample> = read(&a.gold)?;
    // model-based scorers are listed in the config but have no local model
    let unavailable: Vec<UnavailableScorer> = config
        .scorers
        .iter()
        .map(|s| UnavailableScorer { name: s.identity.clone() })
        .collect();
    let bindings: Vec<ScorerBinding<'_>> = config
        .scorers
        .iter()
        .zip(&unavailable)
        .map(|(spec, scorer)| ScorerBinding {
            column: spec.column.clone(),
            pairing: spec.pairing,
            scorer,
        })
        .collect();
    let report = evaluate_corpus(&generated, &gold, &config, &bindings)?;
    let sidecar = a.sidecar.clone().unwrap_or_else(|| a.out.with_extension("samples.jsonl"));
    report.write(&a.out, &sidecar)?;
    print!("{}", report.render());
    Ok(())
}

fn qa_eval(a: &QaEvalArgs, seed: u64) -> Result<()> {
    let train: Vec<QaExample> = read(&a.train)?;
    let dev: Vec<QaExample> = read(&a.dev)?;
    let cfg = QaConfig { seed, ..QaConfig::default() };
    let model = train_qa(&train, &cfg);
    let eval = evaluate_qa(&model, &dev);
    println!("QA dev ROUGE-L F1: {:.2} over {} questions", 100.0 * eval.rouge_l_f1, eval.n);
    for (skill, (f1, n)) in &eval.per_skill {
        println!("{skill}\t{:.2}\t{n}", 100.0 * f1);
    }
    if let Some(out) = &a.out {
        std::fs::write(out, serde_json::to_string_pretty(&eval)?)?;
    }
    Ok(())
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn bundle(a: &BundleArgs, seed: u64) -> Result<()> {
    let mut systems = BTreeMap::new();
    for (name, path) in &a.systems {
        if systems.insert(name.clone(), read::<GeneratedQuestion>(path)?).is_some() {
            bail!("system {name:?} given twice");
        }
    }
    let opts = BundleOptions {
        n_samples: a.n_samples,
        kinds: a.kinds.clone(),
        seed,
        baseline: a.baseline.clone(),
        created_at: now_secs(),
        partition: a.overlap.map(|k| (a.annotators.clone(), k)),
    };
    let bundle = create_annotation_bundle(&systems, &opts)?;
    bundle.save(&a.out)?;
    println!("{} tasks written to {}", bundle.tasks.len(), a.out.display());
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<()> {
    let bundle = Bundle::load(&a.bundle).with_context(|| format!("reading {}", a.bundle.display()))?;
    let store = JudgmentStore::open(&a.store_path)?;
    let state = service::AppState::new(bundle.tasks, store, a.token.clone())?;
    let addr = format!("{}:{}", a.host, a.port);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        info!("serving annotation tasks on {addr}");
        println!("listening on http://{addr}");
        axum::serve(listener, service::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

/// Offline aggregation of a judgment log; equal to what the service reports.
pub fn offline_report(bundle_path: &Path, store_path: &Path) -> Result<AggregateReport> {
    let bundle = Bundle::load(bundle_path).with_context(|| format!("reading {}", bundle_path.display()))?;
    if !store_path.exists() {
        bail!("judgment log {} does not exist", store_path.display());
    }
    let store = JudgmentStore::open(store_path)?;
    Ok(AggregateReport::compute(&bundle.tasks, &store.judgments()))
}

fn report(a: &ReportArgs) -> Result<()> {
    let report = offline_report(&a.bundle, &a.store_path)?;
    let text = match a.format {
        ReportFormat::Table => report.render_table(),
        ReportFormat::Json => serde_json::to_string_pretty(&report)?,
    };
    match &a.out {
        Some(p) => std::fs::write(p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}
