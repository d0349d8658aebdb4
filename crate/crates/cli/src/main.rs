//! `eventrel` — train, decode, score and generate from the command line.
//!
//! Exit codes: 0 success, 1 usage, 2 validation (bad input files, config or
//! flags), 3 internal error.

mod config;
mod predictions;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use eventrel::clustering::Clustering;
use eventrel::corpus::{read_corpus, write_corpus, Document};
use eventrel::features::{FeatureConfig, FeatureFamily};
use eventrel::metrics::{
    baseline_matching, baseline_singleton, event_dag, score_coref, score_sequencing, Aggregation,
};
use eventrel::relgraph::{to_event_dag, Label, RelationGraph, Task};
use eventrel::synth::{adjacency_baseline, generate_with, GenerateOptions, ScriptGrammar};
use eventrel::trainer::{
    load_model, save_model, train_with, Model, TrainConfig, TrainError, WeightChoice,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use config::FileConfig;
use predictions::Prediction;

#[derive(Parser, Debug)]
#[command(name = "eventrel", version, about = "Event coreference and sequencing with latent-structure decoding")]
struct Cli {
    /// TOML run configuration; flags given on the command line override it
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model on an annotated corpus
    Train(TrainArgs),
    /// Decode a corpus with a trained model into a predictions file
    Decode(DecodeArgs),
    /// Score predictions (or a baseline) against an annotated corpus
    Score(ScoreArgs),
    /// Generate a synthetic corpus from a script grammar
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskArg {
    Coref,
    Sequencing,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Coref => Task::Coreference,
            TaskArg::Sequencing => Task::Sequencing,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WeightsArg {
    Averaged,
    Final,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AggregationArg {
    Micro,
    Macro,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Baseline {
    /// every mention in its own cluster (coref)
    Singleton,
    /// clusters of identical (type, realis) (coref)
    Matching,
    /// nearest same-script predecessor (sequencing)
    Adjacency,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Annotated training corpus (JSON lines)
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Where to write the model
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    /// Passes over the corpus
    #[arg(long)]
    iterations: Option<usize>,
    /// Cap on the update step size (unbounded when absent)
    #[arg(long)]
    aggressiveness: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Reshuffle the documents every epoch
    #[arg(long)]
    shuffle: bool,
    /// Skip weight averaging (the averaged weights equal the final ones)
    #[arg(long)]
    no_averaging: bool,
    /// Turn off a feature family (repeatable), e.g. `frame`, `schema`
    #[arg(long = "disable-family", value_name = "FAMILY")]
    disable_family: Vec<String>,
    /// Also write the per-epoch log to this file
    #[arg(long, value_name = "FILE")]
    log: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Corpus to decode; gold relations, if any, are ignored except that
    /// sequencing uses gold coreference clusters as events when present
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Where to write the predictions (JSON lines)
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
    /// Expected task; the model's task is used when absent
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long, value_enum)]
    weights: Option<WeightsArg>,
    /// Worker threads (0 = all cores)
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("system").required(true).args(["predictions", "baseline"])))]
struct ScoreArgs {
    /// Annotated reference corpus
    #[arg(long, value_name = "FILE")]
    gold: PathBuf,
    /// Predictions file written by `decode`
    #[arg(long, value_name = "FILE")]
    predictions: Option<PathBuf>,
    /// Score a baseline instead of a predictions file
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
    /// Script grammar for the adjacency baseline (bundled grammar if absent)
    #[arg(long, value_name = "FILE")]
    grammar: Option<PathBuf>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long, value_enum)]
    aggregation: Option<AggregationArg>,
    /// Also write the report as JSON
    #[arg(long, value_name = "FILE")]
    json: Option<PathBuf>,
    /// Worker threads (0 = all cores)
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Script grammar (bundled grammar if absent)
    #[arg(long, value_name = "FILE")]
    grammar: Option<PathBuf>,
    /// Number of documents
    #[arg(long, value_name = "N")]
    docs: usize,
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
    /// Override the grammar's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Turn off interleaving, distractors and inversions
    #[arg(long)]
    separable: bool,
    /// Add toy dependency, frame and time-expression layers
    #[arg(long)]
    toy_layers: bool,
}

enum Failure {
    Validation(anyhow::Error),
    Internal(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Validation(e)
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn internal(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Internal(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match panic::catch_unwind(AssertUnwindSafe(|| run(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Failure::Validation(e))) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Ok(Err(Failure::Internal(e))) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(3)
        }
        Err(_) => ExitCode::from(3),
    }
}

fn run(cli: Cli) -> Outcome {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Train(a) => cmd_train(a, &file),
        Command::Decode(a) => cmd_decode(a, &file),
        Command::Score(a) => cmd_score(a, &file),
        Command::Generate(a) => cmd_generate(a),
    }
}

fn require_file(path: &Path, what: &str) -> anyhow::Result<()> {
    if !path.is_file() {
        bail!("{what} {}: no such file", path.display());
    }
    Ok(())
}

fn require_output(path: &Path) -> anyhow::Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = parent {
        if !dir.is_dir() {
            bail!("output {}: directory {} does not exist", path.display(), dir.display());
        }
    }
    if path.is_dir() {
        bail!("output {}: is a directory", path.display());
    }
    Ok(())
}

fn load_corpus(path: &Path) -> anyhow::Result<Vec<Document>> {
    read_corpus(path).with_context(|| format!("corpus {}", path.display()))
}

fn thread_pool(jobs: Option<usize>) -> Outcome<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(internal)
}

fn echo(value: &impl Serialize) {
    eprintln!("config: {}", serde_json::to_string(value).expect("config serializes"));
}

fn task_of(flag: Option<TaskArg>, file: &FileConfig) -> Option<Task> {
    flag.or(file.task).map(Task::from)
}

fn parse_families(names: &[String]) -> anyhow::Result<BTreeSet<FeatureFamily>> {
    names
        .iter()
        .map(|n| n.parse::<FeatureFamily>().map_err(|e| anyhow!("--disable-family: {e}")))
        .collect()
}

#[derive(Serialize)]
struct TrainEcho<'a> {
    command: &'static str,
    corpus: &'a Path,
    model: &'a Path,
    task: Task,
    train: &'a TrainConfig,
    disabled_families: &'a BTreeSet<FeatureFamily>,
}

fn cmd_train(a: TrainArgs, file: &FileConfig) -> Outcome {
    let task = task_of(a.task, file).ok_or_else(|| anyhow!("--task is required (coref or sequencing)"))?;
    let mut cfg = file.train.clone().unwrap_or_default();
    if let Some(t) = a.iterations {
        cfg.iterations = t;
    }
    if a.aggressiveness.is_some() {
        cfg.aggressiveness = a.aggressiveness;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.shuffle |= a.shuffle;
    if a.no_averaging {
        cfg.averaging = false;
    }
    cfg.validate().map_err(anyhow::Error::from)?;
    let mut names = file.disable_families.clone();
    names.extend(a.disable_family.iter().cloned());
    let disabled = parse_families(&names)?;

    require_file(&a.corpus, "corpus")?;
    require_output(&a.model)?;
    if let Some(log) = &a.log {
        require_output(log)?;
    }
    echo(&TrainEcho {
        command: "train",
        corpus: &a.corpus,
        model: &a.model,
        task,
        train: &cfg,
        disabled_families: &disabled,
    });

    let corpus = load_corpus(&a.corpus)?;
    let features = FeatureConfig::without(disabled.iter().copied());
    let mut lines = Vec::new();
    let result = train_with(&corpus, task, &cfg, &features, |e| {
        let line = format!(
            "epoch {}/{} match_rate={:.4} updates={} anomalies={} loss={} cumulative_loss={}",
            e.epoch, cfg.iterations, e.match_rate, e.updates, e.anomalies, e.epoch_loss, e.cumulative_loss
        );
        eprintln!("{line}");
        lines.push(line);
    });
    let (model, _) = result.map_err(|e| match e {
        TrainError::Decode { .. } => internal(e),
        e => Failure::Validation(e.into()),
    })?;
    save_model(&model, &a.model).map_err(|e| anyhow!("{}: {e}", a.model.display()))?;
    if let Some(log) = &a.log {
        let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
        fs::write(log, text).with_context(|| format!("writing {}", log.display()))?;
    }
    eprintln!("wrote {}", a.model.display());
    Ok(())
}

/// Coreference partition encoded by a decoded coreference graph.
fn partition_of(g: &RelationGraph) -> Clustering {
    Clustering::from_links(
        g.arcs()
            .filter(|a| a.label == Label::Coref && a.source > 0)
            .map(|a| (a.source, a.target)),
        1..=g.n(),
    )
}

fn decode_one(model: &Model, doc: &Document, choice: WeightChoice) -> anyhow::Result<Prediction> {
    match model.task {
        Task::Coreference => {
            let g = model.decode(doc, choice, &Clustering::singletons(1..=doc.n()));
            Ok(Prediction::new(doc, &partition_of(&g), &[]))
        }
        Task::Sequencing => {
            let clusters = doc.gold_clustering();
            let g = model.decode(doc, choice, &clusters);
            let dag = to_event_dag(&g, &clusters)
                .map_err(|e| anyhow!("document `{}`: {e}", doc.doc_id))?;
            if let Some(cycle) = dag.find_cycle() {
                bail!("document `{}`: decoded event cycle {cycle:?}", doc.doc_id);
            }
            let after: Vec<(usize, usize)> = g.arcs().filter_map(|a| a.after_edge()).collect();
            Ok(Prediction::new(doc, &clusters, &after))
        }
    }
}

#[derive(Serialize)]
struct DecodeEcho<'a> {
    command: &'static str,
    model: &'a Path,
    corpus: &'a Path,
    output: &'a Path,
    task: Task,
    weights: WeightChoice,
    jobs: Option<usize>,
    seed: u64,
}

fn cmd_decode(a: DecodeArgs, file: &FileConfig) -> Outcome {
    require_file(&a.model, "model")?;
    require_file(&a.corpus, "corpus")?;
    require_output(&a.output)?;
    let model = load_model(&a.model).map_err(|e| anyhow!("{}: {e}", a.model.display()))?;
    if let Some(t) = task_of(a.task, file) {
        model.check_task(t).map_err(|e| anyhow!("{}: {e}", a.model.display()))?;
    }
    let choice = match a.weights {
        Some(WeightsArg::Averaged) => WeightChoice::Averaged,
        Some(WeightsArg::Final) => WeightChoice::Final,
        None => file.weights.unwrap_or_default(),
    };
    let jobs = a.jobs.or(file.jobs);
    echo(&DecodeEcho {
        command: "decode",
        model: &a.model,
        corpus: &a.corpus,
        output: &a.output,
        task: model.task,
        weights: choice,
        jobs,
        seed: model.config.seed,
    });

    let corpus = load_corpus(&a.corpus)?;
    let preds = thread_pool(jobs)?
        .install(|| {
            corpus
                .par_iter()
                .map(|d| decode_one(&model, d, choice))
                .collect::<anyhow::Result<Vec<_>>>()
        })
        .map_err(Failure::Internal)?;
    predictions::write(&a.output, &preds)?;
    eprintln!("decoded {} documents into {}", preds.len(), a.output.display());
    Ok(())
}

#[derive(Serialize)]
struct ScoreEcho<'a> {
    command: &'static str,
    gold: &'a Path,
    predictions: Option<&'a Path>,
    baseline: Option<Baseline>,
    task: Task,
    aggregation: Aggregation,
    jobs: Option<usize>,
}

fn cmd_score(a: ScoreArgs, file: &FileConfig) -> Outcome {
    let task = match (task_of(a.task, file), a.baseline) {
        (Some(t), _) => t,
        (None, Some(Baseline::Singleton | Baseline::Matching)) => Task::Coreference,
        (None, Some(Baseline::Adjacency)) => Task::Sequencing,
        (None, None) => Err(anyhow!("--task is required (coref or sequencing)"))?,
    };
    match (a.baseline, task) {
        (Some(Baseline::Adjacency), Task::Coreference) => {
            Err(anyhow!("--baseline adjacency is a sequencing baseline"))?
        }
        (Some(Baseline::Singleton | Baseline::Matching), Task::Sequencing) => {
            Err(anyhow!("--baseline singleton/matching are coref baselines"))?
        }
        _ => {}
    }
    let aggregation = match a.aggregation {
        Some(AggregationArg::Micro) => Aggregation::Micro,
        Some(AggregationArg::Macro) => Aggregation::Macro,
        None => file.aggregation.unwrap_or_default(),
    };
    require_file(&a.gold, "gold corpus")?;
    if let Some(p) = &a.predictions {
        require_file(p, "predictions")?;
    }
    if let Some(g) = &a.grammar {
        require_file(g, "grammar")?;
    }
    if let Some(j) = &a.json {
        require_output(j)?;
    }
    let jobs = a.jobs.or(file.jobs);
    echo(&ScoreEcho {
        command: "score",
        gold: &a.gold,
        predictions: a.predictions.as_deref(),
        baseline: a.baseline,
        task,
        aggregation,
        jobs,
    });

    let gold = load_corpus(&a.gold)?;
    if let Some(d) = gold.iter().find(|d| d.gold.is_none()) {
        Err(anyhow!("gold corpus {}: document `{}` has no annotation", a.gold.display(), d.doc_id))?;
    }
    let systems: Vec<(Clustering, Vec<(usize, usize)>)> = match (&a.predictions, a.baseline) {
        (Some(path), _) => align_predictions(&gold, path)?,
        (None, Some(Baseline::Singleton)) => {
            gold.iter().map(|d| (baseline_singleton(d), Vec::new())).collect()
        }
        (None, Some(Baseline::Matching)) => {
            gold.iter().map(|d| (baseline_matching(d), Vec::new())).collect()
        }
        (None, Some(Baseline::Adjacency)) => {
            let grammar = match &a.grammar {
                Some(p) => ScriptGrammar::load(p).map_err(|e| anyhow!("grammar {}: {e}", p.display()))?,
                None => ScriptGrammar::default(),
            };
            gold.iter()
                .map(|d| {
                    let g = adjacency_baseline(d, &grammar);
                    (d.gold_clustering(), g.arcs().filter_map(|x| x.after_edge()).collect())
                })
                .collect()
        }
        (None, None) => unreachable!("clap requires predictions or a baseline"),
    };

    let pool = thread_pool(jobs)?;
    let report = match task {
        Task::Coreference => {
            let pairs: Vec<_> = pool.install(|| {
                gold.par_iter()
                    .zip(systems.par_iter())
                    .map(|(d, (sys, _))| (d.gold_clustering(), sys.clone()))
                    .collect()
            });
            score_coref(&pairs, aggregation)
        }
        Task::Sequencing => {
            let triples: Vec<_> = pool.install(|| {
                gold.par_iter()
                    .zip(systems.par_iter())
                    .map(|(d, (_, after))| {
                        let k = d.gold_clustering();
                        (
                            event_dag(d.gold_after_pairs(), &k),
                            event_dag(after.iter().copied(), &k),
                            k,
                        )
                    })
                    .collect()
            });
            score_sequencing(&triples, aggregation)
        }
    };
    print!("{}", report.to_table());
    if let Some(j) = &a.json {
        fs::write(j, report.to_json()).with_context(|| format!("writing {}", j.display()))?;
    }
    Ok(())
}

/// Pairs every gold document with its prediction by `doc_id`.
fn align_predictions(
    gold: &[Document],
    path: &Path,
) -> anyhow::Result<Vec<(Clustering, Vec<(usize, usize)>)>> {
    let preds = predictions::read(path)?;
    let mut by_id: BTreeMap<&str, &Prediction> = BTreeMap::new();
    for p in &preds {
        if by_id.insert(&p.doc_id, p).is_some() {
            bail!("predictions {}: duplicate document `{}`", path.display(), p.doc_id);
        }
    }
    let gold_ids: BTreeSet<&str> = gold.iter().map(|d| d.doc_id.as_str()).collect();
    if let Some(extra) = by_id.keys().find(|id| !gold_ids.contains(*id)) {
        bail!("predictions {}: document `{extra}` is not in the gold corpus", path.display());
    }
    gold.iter()
        .map(|d| {
            let p = by_id
                .get(d.doc_id.as_str())
                .ok_or_else(|| anyhow!("predictions {}: no entry for document `{}`", path.display(), d.doc_id))?;
            p.resolve(d)
                .with_context(|| format!("predictions {}: document `{}`", path.display(), d.doc_id))
        })
        .collect()
}

#[derive(Serialize)]
struct GenerateEcho<'a> {
    command: &'static str,
    grammar: Option<&'a Path>,
    docs: usize,
    output: &'a Path,
    seed: u64,
    separable: bool,
    toy_layers: bool,
}

fn cmd_generate(a: GenerateArgs) -> Outcome {
    if let Some(g) = &a.grammar {
        require_file(g, "grammar")?;
    }
    require_output(&a.output)?;
    let mut grammar = match &a.grammar {
        Some(p) => ScriptGrammar::load(p).map_err(|e| anyhow!("grammar {}: {e}", p.display()))?,
        None => ScriptGrammar::default(),
    };
    if let Some(s) = a.seed {
        grammar = grammar.with_seed(s);
    }
    if a.separable {
        grammar = grammar.separable();
    }
    echo(&GenerateEcho {
        command: "generate",
        grammar: a.grammar.as_deref(),
        docs: a.docs,
        output: &a.output,
        seed: grammar.seed,
        separable: a.separable,
        toy_layers: a.toy_layers,
    });
    let docs = generate_with(&grammar, a.docs, GenerateOptions { toy_layers: a.toy_layers });
    write_corpus(&docs, &a.output).with_context(|| format!("writing {}", a.output.display()))?;
    eprintln!("wrote {} documents to {}", docs.len(), a.output.display());
    Ok(())
}
