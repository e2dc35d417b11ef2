//! The `domtree` command line.
//!
//! Exit codes: 0 on success, 1 for usage errors (bad flags, missing
//! required inputs), 2 for data and validation errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use domtree_core::diagnostics::{model_grad_check, GradCheckSetup, ProbePrecision};
use domtree_core::synth::{SynthSpec, SynthTask, DEFAULT_TARGETS_PER_CLASS};
use domtree_core::train::TrainConfig;
use domtree_core::{ClassLabel, IngestConfig, ModelKind, Split, SplitRatios};
use serde::Serialize;

use crate::config::RunConfig;
use crate::exec::Exec;
use crate::pipeline::{self, FeatureExpectation, FeatureOptions, TrainRequest};
use crate::report;

/// Relative error a gradient check must stay under.
pub const GRAD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "domtree", version, about = "Context-aware subtree classification of DOM trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled dataset with a manifest.
    Synth(SynthArgs),
    /// Count the training split's tags into a vocabulary file.
    Vocab(VocabArgs),
    /// Train a model, writing the best checkpoint and a per-epoch CSV log.
    Train(TrainArgs),
    /// Score a checkpoint on one split of a manifest.
    Eval(EvalArgs),
    /// Classify one node of a snapshot.
    Predict(PredictArgs),
    /// Compare analytic and numerical gradients on random trees.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// local, path-context or sibling-context.
    #[arg(long)]
    pub task: String,
    #[arg(long, default_value_t = 90)]
    pub pages: usize,
    #[arg(long, default_value_t = 20)]
    pub nodes_min: usize,
    #[arg(long, default_value_t = 60)]
    pub nodes_max: usize,
    /// Comma-separated class names.
    #[arg(long, default_value = "name,price", value_delimiter = ',')]
    pub classes: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_TARGETS_PER_CLASS)]
    pub targets_per_class: usize,
    #[arg(long, default_value_t = 1)]
    pub regions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train, validation and test weights; normalised to sum to 1.
    #[arg(long, default_value = "64,20,16", value_delimiter = ',', num_args = 3)]
    pub ratios: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct VocabArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output vocabulary file.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Fixed tag vocabulary; counted over the training split otherwise.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Output checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Output per-epoch CSV log.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// fc, mono-bu, bidir-features or bidir-embeddings.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub dedicated_context_kernel: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Drop the four bounding-box slots.
    #[arg(long)]
    pub mask_bbox: bool,
    /// Standardise the scalar slots with training statistics.
    #[arg(long)]
    pub standardize: bool,
    #[arg(long)]
    pub negatives_per_page: Option<usize>,
    /// Do not add the subject-node example per page.
    #[arg(long)]
    pub no_subject_node: bool,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Reject the checkpoint unless its vocabulary equals this file.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Reject the checkpoint unless it was trained with the bbox mask.
    #[arg(long)]
    pub mask_bbox: bool,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub snapshot: PathBuf,
    /// Node id (pre-order position).
    #[arg(long)]
    pub node: usize,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub mask_bbox: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub dedicated_context_kernel: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub hidden: usize,
    #[arg(long, default_value_t = 20)]
    pub trees: usize,
    #[arg(long, default_value_t = 10)]
    pub max_nodes: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long)]
    pub json: bool,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
        }
    }
}

fn data(e: impl std::fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Parses `argv` and runs the command; returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    1
                }
            };
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(f) => {
            let (Failure::Usage(msg) | Failure::Data(msg)) = &f;
            let _ = writeln!(err, "error: {msg}");
            if matches!(f, Failure::Usage(_)) {
                let _ = writeln!(err, "\nFor more information, try '--help'.");
            }
            f.code()
        }
    }
}

fn print(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes()).map_err(data)
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(data)?;
    print(out, &(text + "\n"))
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig, Failure> {
    path.map_or(Ok(RunConfig::default()), |p| RunConfig::read(p).map_err(data))
}

fn executor(threads: Option<usize>) -> Result<Exec, Failure> {
    let threads = threads.unwrap_or(1);
    if threads == 0 {
        return Err(usage("--threads must be at least 1"));
    }
    Exec::new(threads).map_err(data)
}

fn execute(command: Command, out: &mut dyn Write) -> Result<i32, Failure> {
    match command {
        Command::Synth(a) => synth(a, out),
        Command::Vocab(a) => vocab(a, out),
        Command::Train(a) => train(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Predict(a) => predict(a, out),
        Command::Gradcheck(a) => gradcheck(a, out),
    }
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let task: SynthTask = a.task.parse().map_err(|e| usage(format!("{e}")))?;
    let classes = a
        .classes
        .iter()
        .map(|c| c.trim().parse::<ClassLabel>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| usage(format!("{e}")))?;
    let total: f64 = a.ratios.iter().sum();
    if !(a.ratios.iter().all(|r| r.is_finite() && *r >= 0.0) && total > 0.0) {
        return Err(usage("--ratios needs three non-negative weights with a positive sum"));
    }
    let ratios = SplitRatios([a.ratios[0] / total, a.ratios[1] / total, a.ratios[2] / total]);
    let spec = SynthSpec {
        task,
        pages: a.pages,
        nodes_min: a.nodes_min,
        nodes_max: a.nodes_max,
        classes,
        targets_per_class: a.targets_per_class,
        seed: a.seed,
        regions: a.regions,
    };
    let written = pipeline::synthesize(&spec, ratios, &a.out).map_err(data)?;
    if a.json {
        print_json(
            out,
            &serde_json::json!({
                "manifest": written.manifest,
                "config": written.config,
                "train": written.counts[0],
                "validation": written.counts[1],
                "test": written.counts[2],
            }),
        )?;
    } else {
        print(
            out,
            &format!(
                "wrote {} pages ({} train, {} validation, {} test)\nmanifest: {}\nrun config: {}\n",
                a.pages,
                written.counts[0],
                written.counts[1],
                written.counts[2],
                written.manifest.display(),
                written.config.display()
            ),
        )?;
    }
    Ok(0)
}

fn vocab(a: VocabArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let config = load_config(a.config.as_ref())?;
    let manifest = a.manifest.or(config.manifest).ok_or_else(|| usage("--manifest is required"))?;
    let path = a.vocab.or(config.vocab).ok_or_else(|| usage("--vocab (output file) is required"))?;
    let v = pipeline::build_vocabulary(&manifest, &path).map_err(data)?;
    print(out, &format!("wrote {} tags to {}\n", v.len(), path.display()))?;
    Ok(0)
}

/// Flags merged over the config file.
fn train_request(a: &TrainArgs, config: RunConfig) -> Result<(TrainRequest, Option<usize>), Failure> {
    let name = a
        .model
        .clone()
        .or(config.model)
        .ok_or_else(|| usage("--model is required"))?;
    let dedicated = a.dedicated_context_kernel || config.dedicated_context_kernel.unwrap_or(false);
    let kind = ModelKind::parse_with_flag(&name, dedicated).map_err(|e| usage(e.to_string()))?;
    let mut train = TrainConfig::new(kind);
    if let Some(v) = a.epochs.or(config.epochs) {
        train.epochs = v;
    }
    if let Some(v) = a.batch_size.or(config.batch_size) {
        train.batch_size = v;
    }
    if let Some(v) = a.lr.or(config.lr) {
        train.learning_rate = v;
    }
    if let Some(v) = a.hidden.or(config.hidden) {
        train.hidden = v;
    }
    if let Some(v) = a.seed.or(config.seed) {
        train.seed = v;
    }
    train.validate().map_err(|e| usage(e.to_string()))?;
    let mut ingest = IngestConfig {
        seed: train.seed,
        ..IngestConfig::default()
    };
    if let Some(v) = a.negatives_per_page.or(config.negatives_per_page) {
        ingest.negatives_per_page = v;
    }
    ingest.subject_node = !a.no_subject_node && config.subject_node.unwrap_or(true);
    let request = TrainRequest {
        manifest: a
            .manifest
            .clone()
            .or(config.manifest)
            .ok_or_else(|| usage("--manifest is required"))?,
        features: FeatureOptions {
            vocab: a.vocab.clone().or(config.vocab),
            mask_bbox: a.mask_bbox || config.mask_bbox.unwrap_or(false),
            standardize: a.standardize || config.standardize.unwrap_or(false),
        },
        ingest,
        config: train,
        checkpoint: a
            .checkpoint
            .clone()
            .or(config.checkpoint)
            .ok_or_else(|| usage("--checkpoint is required"))?,
        log: a.log.clone().or(config.log),
    };
    Ok((request, a.threads.or(config.threads)))
}

fn train(a: TrainArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let config = load_config(a.config.as_ref())?;
    let (request, threads) = train_request(&a, config)?;
    let exec = executor(threads)?;
    let summary = pipeline::train(&request, &exec).map_err(data)?;
    if a.json {
        print_json(out, &report::TrainJson::from(&summary))?;
    } else {
        print(out, &report::train_text(&summary))?;
    }
    Ok(0)
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let config = load_config(a.config.as_ref())?;
    let checkpoint = a
        .checkpoint
        .or(config.checkpoint)
        .ok_or_else(|| usage("--checkpoint is required"))?;
    let manifest = a.manifest.or(config.manifest).ok_or_else(|| usage("--manifest is required"))?;
    let split: Split = a.split.parse().map_err(|e| usage(format!("{e}")))?;
    let expect = FeatureExpectation {
        vocab: a.vocab,
        mask_bbox: a.mask_bbox.then_some(true),
    };
    let exec = executor(a.threads.or(config.threads))?;
    let metrics = pipeline::evaluate(&checkpoint, &manifest, split, &expect, &exec).map_err(data)?;
    if a.json {
        print_json(out, &report::MetricsJson::from(&metrics))?;
    } else {
        print(out, &report::metrics_table(&metrics))?;
    }
    Ok(0)
}

fn predict(a: PredictArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let expect = FeatureExpectation {
        vocab: a.vocab,
        mask_bbox: a.mask_bbox.then_some(true),
    };
    let p = pipeline::predict(&a.checkpoint, &a.snapshot, a.node, &expect).map_err(data)?;
    if a.json {
        let label = crate::snapshot::read_snapshot(&a.snapshot)
            .map_err(data)?
            .tree
            .payload(domtree_core::NodeRef(a.node))
            .label;
        print_json(out, &report::PredictionJson::new(a.node, &p, label))?;
    } else {
        print(out, &report::prediction_text(a.node, &p))?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct GradcheckJson {
    model: String,
    seed: u64,
    coordinates: usize,
    max_relative_error: f64,
    worst: Option<(String, usize)>,
    double_precision_probe_error: f64,
    tolerance: f64,
    pass: bool,
}

fn gradcheck(a: GradcheckArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let kind = ModelKind::parse_with_flag(&a.model, a.dedicated_context_kernel).map_err(|e| usage(e.to_string()))?;
    if a.hidden == 0 || a.trees == 0 || a.max_nodes == 0 {
        return Err(usage("--hidden, --trees and --max-nodes must be at least 1"));
    }
    let setup = GradCheckSetup {
        hidden: a.hidden,
        trees: a.trees,
        max_nodes: a.max_nodes,
        step: a.step,
        ..GradCheckSetup::new(kind, a.seed)
    };
    let extended = model_grad_check(&setup, ProbePrecision::Extended).map_err(data)?;
    let double = model_grad_check(&setup, ProbePrecision::Double).map_err(data)?;
    let pass = extended.max_relative_error < GRAD_TOLERANCE;
    if a.json {
        print_json(
            out,
            &GradcheckJson {
                model: kind.name().to_owned(),
                seed: a.seed,
                coordinates: extended.coordinates,
                max_relative_error: extended.max_relative_error,
                worst: extended.worst.clone(),
                double_precision_probe_error: double.max_relative_error,
                tolerance: GRAD_TOLERANCE,
                pass,
            },
        )?;
    } else {
        let worst = extended
            .worst
            .as_ref()
            .map_or(String::new(), |(name, k)| format!(" (worst: {name}[{k}])"));
        print(
            out,
            &format!(
                "{kind}: max relative error {:.3e} over {} coordinates{worst}\nwith f64 probes instead: {:.3e}\n",
                extended.max_relative_error, extended.coordinates, double.max_relative_error
            ),
        )?;
    }
    if pass {
        Ok(0)
    } else {
        Err(Failure::Data(format!(
            "max relative error {:.3e} is not below {GRAD_TOLERANCE:e}",
            extended.max_relative_error
        )))
    }
}
