//! Context-aware subtree representations for attributed DOM trees.
//!
//! The crate is `no_std` (with `alloc`) and holds everything that is pure
//! computation: a reverse-mode tape, the sequential and Child-Sum LSTM
//! cells, the four subtree classifiers (fully connected, bottom-up,
//! bidirectional over features, bidirectional over embeddings), training,
//! metrics, featurisation and the synthetic-task generator. File formats,
//! IO and the command line live in the `domtree` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod dataset;
pub mod diagnostics;
pub mod dom;
pub mod features;
pub mod lstm;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod reference;
pub mod synth;
pub mod train;
pub mod tree;

pub use dataset::{Dataset, IngestConfig, LabeledExample, Split, SplitRatios};
pub use dom::{ClassLabel, DomNode, Page, Visibility, NUM_CLASSES};
pub use features::{FeatureMask, Featurizer, TagVocabulary, FEATURE_DIM};
pub use metrics::MetricsReport;
pub use model::{Model, ModelConfig, ModelError, ModelKind, Prediction};
pub use numeric::{grad_check, NumericError, ParamSet, Tape};
pub use train::{EpochLog, Executor, Sequential, TrainConfig, TrainError, TrainOutcome};
pub use tree::{NodeRef, Tree, TreeError};
