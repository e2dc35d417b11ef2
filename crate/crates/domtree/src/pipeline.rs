//! End-to-end operations over files: synthesise, build a vocabulary,
//! train, evaluate and predict.

use std::path::{Path, PathBuf};

use domtree_core::dataset::{split_dataset, DatasetError};
use domtree_core::features::{FeatureScaling, TagVocabulary};
use domtree_core::synth::{self, SynthError, SynthSpec};
use domtree_core::train::{self, TrainConfig, TrainError};
use domtree_core::{
    Dataset, Executor, FeatureMask, Featurizer, IngestConfig, MetricsReport, ModelError, NodeRef, Page, Prediction, Split,
    SplitRatios,
};

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::config::{ConfigError, RunConfig};
use crate::epoch_log::{write_log_file, LogError};
use crate::manifest::{read_vocabulary, write_vocabulary, LoadedPage, Manifest, ManifestEntry, ManifestError};
use crate::snapshot::{read_snapshot, write_snapshot, SnapshotError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("the {0} split has no examples")]
    EmptySplit(Split),
    #[error("node {node} is out of range for a page of {len} nodes")]
    NodeOutOfRange { node: usize, len: usize },
}

/// How node features are built for training.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureOptions {
    /// Fixed vocabulary file; otherwise counted over the training pages.
    pub vocab: Option<PathBuf>,
    pub mask_bbox: bool,
    /// Standardise the scalar slots with training-page statistics.
    pub standardize: bool,
}

pub fn build_featurizer(train_pages: &[&Page], options: &FeatureOptions) -> Result<Featurizer, PipelineError> {
    let vocab = match &options.vocab {
        Some(path) => read_vocabulary(path)?,
        None => TagVocabulary::build(train_pages.iter().copied()),
    };
    let mask = if options.mask_bbox {
        FeatureMask::bbox()
    } else {
        FeatureMask::none()
    };
    let mut featurizer = Featurizer::new(vocab, mask);
    if options.standardize {
        featurizer.scaling = Some(FeatureScaling::fit(train_pages.iter().copied(), &featurizer.vocab));
    }
    Ok(featurizer)
}

/// Ingests pages, logging (not failing on) skipped pages and negative
/// shortfalls.
pub fn ingest(pages: &[LoadedPage], featurizer: &Featurizer, config: &IngestConfig) -> Dataset {
    let (data, issues) = Dataset::ingest(pages.iter().map(|p| &p.page), featurizer, config);
    for issue in issues {
        log::warn!("{issue}");
    }
    data
}

/// Builds the tag vocabulary of the training split and writes it out.
pub fn build_vocabulary(manifest: &Path, out: &Path) -> Result<TagVocabulary, PipelineError> {
    let manifest = Manifest::read(manifest)?;
    let pages = manifest.load(Some(Split::Train))?;
    let vocab = TagVocabulary::build(pages.iter().map(|p| &p.page));
    write_vocabulary(out, &vocab)?;
    Ok(vocab)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRequest {
    pub manifest: PathBuf,
    pub features: FeatureOptions,
    pub ingest: IngestConfig,
    pub config: TrainConfig,
    pub checkpoint: PathBuf,
    pub log: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub epochs: usize,
    pub train_examples: usize,
    pub validation_examples: usize,
    /// Validation metrics of the selected epoch.
    pub validation: MetricsReport,
}

/// Trains on the manifest's train split, selects the epoch with the lowest
/// validation loss and writes its checkpoint (and the per-epoch log).
pub fn train<E: Executor>(request: &TrainRequest, exec: &E) -> Result<TrainSummary, PipelineError> {
    let manifest = Manifest::read(&request.manifest)?;
    let all = manifest.load(None)?;
    let (train_pages, val_pages): (Vec<LoadedPage>, Vec<LoadedPage>) = {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for p in all {
            match p.entry.split {
                Split::Train => train.push(p),
                Split::Validation => val.push(p),
                Split::Test => {}
            }
        }
        (train, val)
    };
    let refs: Vec<&Page> = train_pages.iter().map(|p| &p.page).collect();
    let featurizer = build_featurizer(&refs, &request.features)?;
    let train_set = ingest(&train_pages, &featurizer, &request.ingest);
    let val_set = ingest(&val_pages, &featurizer, &request.ingest);
    if train_set.is_empty() {
        return Err(PipelineError::EmptySplit(Split::Train));
    }
    if val_set.is_empty() {
        return Err(PipelineError::EmptySplit(Split::Validation));
    }
    log::info!(
        "{} training and {} validation examples, {} input features",
        train_set.len(),
        val_set.len(),
        featurizer.input_dim()
    );
    let outcome = train::train(&request.config, featurizer.input_dim(), &train_set, &val_set, exec)?;
    let checkpoint = Checkpoint::new(
        &outcome.best,
        &featurizer,
        request.config.seed,
        &request.ingest,
        outcome.best_epoch,
        Some(outcome.best_val_loss),
    );
    checkpoint.write(&request.checkpoint)?;
    if let Some(path) = &request.log {
        write_log_file(path, &outcome.log)?;
    }
    Ok(TrainSummary {
        best_epoch: outcome.best_epoch,
        best_val_loss: outcome.best_val_loss,
        epochs: outcome.log.len(),
        train_examples: train_set.len(),
        validation_examples: val_set.len(),
        validation: outcome.log[outcome.best_epoch - 1].val_metrics.clone(),
    })
}

/// Optional features the caller expects the checkpoint to have been
/// trained with.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureExpectation {
    pub vocab: Option<PathBuf>,
    pub mask_bbox: Option<bool>,
}

fn restore(checkpoint: &Path, expect: &FeatureExpectation) -> Result<crate::checkpoint::Restored, PipelineError> {
    let restored = Checkpoint::read(checkpoint)?.restore()?;
    let vocab = expect.vocab.as_deref().map(read_vocabulary).transpose()?;
    let mask = expect
        .mask_bbox
        .map(|m| if m { FeatureMask::bbox() } else { FeatureMask::none() });
    restored.check_features(vocab.as_ref(), mask.as_ref())?;
    Ok(restored)
}

/// Metrics of a checkpoint on one split, with the checkpoint's frozen
/// featurizer and ingest settings.
pub fn evaluate<E: Executor>(
    checkpoint: &Path,
    manifest: &Path,
    split: Split,
    expect: &FeatureExpectation,
    exec: &E,
) -> Result<MetricsReport, PipelineError> {
    let restored = restore(checkpoint, expect)?;
    let pages = Manifest::read(manifest)?.load(Some(split))?;
    let data = ingest(&pages, &restored.featurizer, &restored.ingest);
    if data.is_empty() {
        return Err(PipelineError::EmptySplit(split));
    }
    Ok(train::evaluate(&restored.model, &data, exec)?)
}

/// Class probabilities of one node of a snapshot.
pub fn predict(
    checkpoint: &Path,
    snapshot: &Path,
    node: usize,
    expect: &FeatureExpectation,
) -> Result<Prediction, PipelineError> {
    let restored = restore(checkpoint, expect)?;
    let page = read_snapshot(snapshot)?;
    if node >= page.tree.len() {
        return Err(PipelineError::NodeOutOfRange {
            node,
            len: page.tree.len(),
        });
    }
    let tree = restored.featurizer.tree(&page.tree);
    let label = page.tree.payload(NodeRef(node)).label;
    Ok(restored.model.predict(&tree, NodeRef(node), label)?)
}

/// Files written by [`synthesize`].
#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutput {
    pub manifest: PathBuf,
    /// Run configuration with the ingest settings synthetic pages need.
    pub config: PathBuf,
    /// Pages per split, in train / validation / test order.
    pub counts: [usize; 3],
}

/// Ingest settings matching synthetic pages: every planted node is a
/// positive and nothing else is an example.
pub const SYNTH_INGEST: RunConfig = RunConfig {
    model: None,
    dedicated_context_kernel: None,
    epochs: None,
    batch_size: None,
    lr: None,
    hidden: None,
    seed: None,
    mask_bbox: None,
    standardize: None,
    negatives_per_page: Some(0),
    subject_node: Some(false),
    manifest: None,
    vocab: None,
    checkpoint: None,
    log: None,
    threads: None,
};

/// Writes `pages/NNNNN.json`, `manifest.json` and `config.json` under
/// `out`. Pages are split by `ratios` (stratified by region, shuffled
/// under the generator seed).
pub fn synthesize(spec: &SynthSpec, ratios: SplitRatios, out: &Path) -> Result<SynthOutput, PipelineError> {
    let pages = synth::generate(spec)?;
    let ids: Vec<(String, String)> = pages
        .iter()
        .map(|p| (p.page.id.clone(), p.page.region.clone()))
        .collect();
    let splits = split_dataset(&ids, ratios, spec.seed)?;
    let dir = out.join("pages");
    std::fs::create_dir_all(&dir).map_err(|source| PipelineError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut entries = Vec::with_capacity(pages.len());
    let mut counts = [0usize; 3];
    for (i, (page, split)) in pages.iter().zip(&splits).enumerate() {
        let rel = PathBuf::from("pages").join(format!("{i:05}.json"));
        write_snapshot(&out.join(&rel), &page.page)?;
        counts[Split::ALL.iter().position(|s| s == split).expect("known split")] += 1;
        entries.push(ManifestEntry {
            path: rel,
            region: page.page.region.clone(),
            split: *split,
        });
    }
    let manifest_path = out.join("manifest.json");
    Manifest {
        entries,
        base: out.to_path_buf(),
    }
    .write(&manifest_path)?;
    let config_path = out.join("config.json");
    RunConfig {
        manifest: Some(PathBuf::from("manifest.json")),
        ..SYNTH_INGEST
    }
    .write(&config_path)?;
    Ok(SynthOutput {
        manifest: manifest_path,
        config: config_path,
        counts,
    })
}
