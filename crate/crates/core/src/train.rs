//! Mini-batch SGD with per-epoch validation and best-epoch selection.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::dom::ClassLabel;
use crate::lstm::DEFAULT_HIDDEN;
use crate::metrics::{evaluate_predictions, MetricsReport};
use crate::model::{Model, ModelConfig, ModelError, ModelKind, Prediction};
use crate::numeric::{Gradients, NumericError, Tape};
use crate::tree::NodeRef;

pub const DEFAULT_EPOCHS: usize = 150;
pub const DEFAULT_BATCH_SIZE: usize = 50;
pub const DEFAULT_LEARNING_RATE: f64 = 0.0025;

const SHUFFLE_SALT: u64 = 0x5eed_5eed_0000_0001;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Seeds both initialisation and the per-epoch shuffles.
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            hidden: DEFAULT_HIDDEN,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            learning_rate: DEFAULT_LEARNING_RATE,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(TrainError::Config("learning rate must be finite and non-negative"));
        }
        if self.hidden == 0 {
            return Err(TrainError::Config("hidden width must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(&'static str),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("epoch {epoch}, batch {batch}: {source}")]
    Step {
        epoch: usize,
        batch: usize,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Runs independent per-index jobs and returns results in index order.
///
/// Implementations may run jobs concurrently; callers reduce the results
/// sequentially, so the outcome never depends on scheduling.
pub trait Executor {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs jobs one after another on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// Per-epoch training record.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean training loss over the epoch, measured before each step.
    pub train_loss: f64,
    /// Mean validation loss after the epoch.
    pub val_loss: f64,
    pub val_metrics: MetricsReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Parameters after the epoch with the lowest validation loss.
    pub best: Model,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub log: Vec<EpochLog>,
}

/// Trains a fresh model. Examples are reshuffled every epoch; each batch
/// takes one SGD step on the mean of its per-example gradients.
pub fn train<E: Executor>(
    config: &TrainConfig,
    input_dim: usize,
    train_set: &Dataset,
    validation: &Dataset,
    exec: &E,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let model = Model::init(
        ModelConfig {
            kind: config.kind,
            input_dim,
            hidden: config.hidden,
        },
        config.seed,
    )?;
    train_model(config, model, train_set, validation, exec)
}

/// Trains starting from the given parameters.
pub fn train_model<E: Executor>(
    config: &TrainConfig,
    mut model: Model,
    train_set: &Dataset,
    validation: &Dataset,
    exec: &E,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit("training"));
    }
    if validation.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_SALT);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Model)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (batch_index, batch) in order.chunks(config.batch_size).enumerate() {
            let step_err = |source: ModelError| TrainError::Step {
                epoch,
                batch: batch_index,
                source,
            };
            let groups = group_by_page(train_set, batch);
            let results = exec.map(groups.len(), |j| group_gradient(&model, train_set, &groups[j]));
            let mut total = Gradients::default();
            for result in results {
                let (losses, grads) = result.map_err(step_err)?;
                for loss in losses {
                    if !loss.is_finite() {
                        return Err(TrainError::NonFiniteLoss {
                            epoch,
                            batch: batch_index,
                        });
                    }
                    loss_sum += loss;
                }
                total.add_assign(&grads);
            }
            let params = model.params_mut();
            params.accumulate(&total, 1.0 / batch.len() as f64);
            params
                .sgd_step(config.learning_rate)
                .map_err(|e| step_err(ModelError::Numeric(e)))?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let val_metrics = evaluate(&model, validation, exec)?;
        let val_loss = val_metrics.loss.unwrap_or(f64::NAN);
        if !val_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch, batch: 0 });
        }
        log::info!(
            "epoch {epoch}: train loss {train_loss:.6}, validation loss {val_loss:.6}, validation macro F1 {:.4}",
            val_metrics.macro_f1
        );
        if best.as_ref().is_none_or(|(_, b, _)| val_loss < *b) {
            best = Some((epoch, val_loss, model.clone()));
        }
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            val_metrics,
        });
    }
    let (best_epoch, best_val_loss, best) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val_loss,
        log,
    })
}

/// Example indices grouped by page, pages in order of first appearance
/// and examples in their given order within each page.
fn group_by_page(data: &Dataset, examples: &[usize]) -> Vec<Vec<usize>> {
    let mut slot_of_page: BTreeMap<usize, usize> = BTreeMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in examples {
        let page = data.examples[i].page;
        let slot = *slot_of_page.entry(page).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[slot].push(i);
    }
    groups
}

/// Summed gradient of the losses of one page's examples, recorded on a
/// single tape so per-tree work is shared. Returns the individual losses.
fn group_gradient(model: &Model, data: &Dataset, group: &[usize]) -> Result<(Vec<f64>, Gradients), ModelError> {
    let page = data.examples[group[0]].page;
    let targets: Vec<(NodeRef, ClassLabel)> = group
        .iter()
        .map(|&i| (data.examples[i].target, data.examples[i].label))
        .collect();
    let mut tape = Tape::new(model.params());
    let losses = model.tree_losses(&mut tape, &data.pages[page], &targets)?;
    let values = losses
        .iter()
        .map(|&l| tape.scalar(l))
        .collect::<Result<Vec<_>, _>>()?;
    let total = tape.sum(&losses)?;
    let grads = tape.backward(total)?;
    Ok((values, grads))
}

/// Predictions for every example of `data`, in example order.
pub fn predict_all<E: Executor>(model: &Model, data: &Dataset, exec: &E) -> Result<Vec<Prediction>, ModelError> {
    let all: Vec<usize> = (0..data.len()).collect();
    let groups = group_by_page(data, &all);
    let per_group = exec.map(groups.len(), |j| {
        let group = &groups[j];
        let tree = &data.pages[data.examples[group[0]].page];
        let targets: Vec<(NodeRef, Option<ClassLabel>)> = group
            .iter()
            .map(|&i| (data.examples[i].target, Some(data.examples[i].label)))
            .collect();
        model.predict_many(tree, &targets)
    });
    let mut out: Vec<Option<Prediction>> = alloc::vec![None; data.len()];
    for (group, predictions) in groups.iter().zip(per_group) {
        for (&i, p) in group.iter().zip(predictions?) {
            out[i] = Some(p);
        }
    }
    Ok(out.into_iter().map(|p| p.expect("every example predicted")).collect())
}

/// Metrics and mean loss of `model` on `data`.
pub fn evaluate<E: Executor>(model: &Model, data: &Dataset, exec: &E) -> Result<MetricsReport, ModelError> {
    let predictions = predict_all(model, data, exec)?;
    let pairs: Vec<(ClassLabel, ClassLabel)> = data
        .examples
        .iter()
        .zip(&predictions)
        .map(|(ex, p)| (ex.label, p.predicted))
        .collect();
    let loss = if predictions.is_empty() {
        None
    } else {
        let total: f64 = predictions.iter().map(|p| p.loss.unwrap_or(0.0)).sum();
        Some(total / predictions.len() as f64)
    };
    Ok(evaluate_predictions(&pairs, loss))
}

impl From<NumericError> for TrainError {
    fn from(e: NumericError) -> Self {
        TrainError::Model(ModelError::Numeric(e))
    }
}
