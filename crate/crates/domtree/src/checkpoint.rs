//! Model checkpoints: parameters, the frozen featurizer and training
//! metadata in one JSON document.

use std::collections::BTreeMap;
use std::path::Path;

use domtree_core::dataset::IngestConfig;
use domtree_core::dom::ClassLabel;
use domtree_core::features::{FeatureMask, FeatureScaling, Featurizer, TagVocabulary, SCALAR_SLOTS};
use domtree_core::lstm::FORGET_BIAS;
use domtree_core::numeric::Matrix;
use domtree_core::{Model, ModelConfig, ModelKind};
use serde::{Deserialize, Serialize};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const INIT_SCHEME: &str = "glorot-uniform";
/// Hidden nonlinearity of the fully connected baseline.
pub const FC_ACTIVATION: &str = "tanh";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitRecord {
    pub seed: u64,
    pub scheme: String,
    pub forget_bias: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRecord {
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingRecord {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    /// 1-based epoch whose parameters were kept; 0 for an untrained model.
    pub epoch: usize,
    pub val_loss: Option<f64>,
    pub fc_activation: String,
    pub negatives_per_page: usize,
    pub subject_node: bool,
    pub ingest_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_scaling: Option<ScalingRecord>,
}

/// On-disk checkpoint document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    /// `fc`, `mono-bu`, `bidir-features` or `bidir-embeddings`.
    pub model_kind: String,
    /// Set for bidirectional-embeddings models with their own context kernel.
    #[serde(default)]
    pub dedicated_context_kernel: bool,
    pub hidden: usize,
    pub classes: Vec<String>,
    pub tag_vocab: Vec<String>,
    /// Feature slots removed before the model sees the vector.
    pub feature_mask: Vec<usize>,
    pub init: InitRecord,
    pub params: BTreeMap<String, ParamRecord>,
    pub metadata: Metadata,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint field `{field}`: {reason}")]
    Field { field: &'static str, reason: String },
    #[error("{0} differs from the one frozen in the checkpoint")]
    Mismatch(&'static str),
}

fn field(field: &'static str, reason: impl ToString) -> CheckpointError {
    CheckpointError::Field {
        field,
        reason: reason.to_string(),
    }
}

/// A checkpoint decoded into live objects.
#[derive(Clone, Debug, PartialEq)]
pub struct Restored {
    pub model: Model,
    pub featurizer: Featurizer,
    pub ingest: IngestConfig,
    pub metadata: Metadata,
}

impl Checkpoint {
    pub fn new(
        model: &Model,
        featurizer: &Featurizer,
        init_seed: u64,
        ingest: &IngestConfig,
        epoch: usize,
        val_loss: Option<f64>,
    ) -> Self {
        let config = model.config();
        let params = model
            .params()
            .iter()
            .map(|(_, p)| {
                let v = p.value();
                (
                    p.name().to_owned(),
                    ParamRecord {
                        shape: [v.rows(), v.cols()],
                        data: v.data().to_vec(),
                    },
                )
            })
            .collect();
        Self {
            version: CHECKPOINT_VERSION,
            model_kind: config.kind.name().to_owned(),
            dedicated_context_kernel: config.kind.dedicated_context_kernel(),
            hidden: config.hidden,
            classes: ClassLabel::ALL.iter().map(|c| c.name().to_owned()).collect(),
            tag_vocab: featurizer.vocab.tags().to_vec(),
            feature_mask: featurizer.mask.removed().to_vec(),
            init: InitRecord {
                seed: init_seed,
                scheme: INIT_SCHEME.to_owned(),
                forget_bias: FORGET_BIAS,
            },
            params,
            metadata: Metadata {
                epoch,
                val_loss,
                fc_activation: FC_ACTIVATION.to_owned(),
                negatives_per_page: ingest.negatives_per_page,
                subject_node: ingest.subject_node,
                ingest_seed: ingest.seed,
                feature_scaling: featurizer.scaling.as_ref().map(|s| ScalingRecord {
                    mean: s.mean.to_vec(),
                    std: s.std.to_vec(),
                }),
            },
        }
    }

    /// Rebuilds the model and featurizer, checking every field.
    pub fn restore(&self) -> Result<Restored, CheckpointError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(self.version));
        }
        let expected: Vec<&str> = ClassLabel::ALL.iter().map(|c| c.name()).collect();
        if self.classes != expected {
            return Err(field("classes", format!("expected {expected:?}")));
        }
        if self.init.scheme != INIT_SCHEME {
            return Err(field("init.scheme", format!("unknown scheme {:?}", self.init.scheme)));
        }
        if self.metadata.fc_activation != FC_ACTIVATION {
            return Err(field("metadata.fc_activation", "only tanh is supported"));
        }
        let kind = ModelKind::parse_with_flag(&self.model_kind, self.dedicated_context_kernel)
            .map_err(|e| field("model_kind", e))?;
        let vocab = TagVocabulary::from_tags(self.tag_vocab.clone()).map_err(|e| field("tag_vocab", e))?;
        let mask = FeatureMask::from_slots(self.feature_mask.clone()).map_err(|e| field("feature_mask", e))?;
        let mut featurizer = Featurizer::new(vocab, mask);
        if let Some(s) = &self.metadata.feature_scaling {
            let arr = |v: &Vec<f64>| -> Result<[f64; SCALAR_SLOTS], CheckpointError> {
                v.as_slice()
                    .try_into()
                    .map_err(|_| field("metadata.feature_scaling", format!("expected {SCALAR_SLOTS} entries")))
            };
            featurizer.scaling = Some(
                FeatureScaling::new(arr(&s.mean)?, arr(&s.std)?).map_err(|e| field("metadata.feature_scaling", e))?,
            );
        }
        let config = ModelConfig {
            kind,
            input_dim: featurizer.input_dim(),
            hidden: self.hidden,
        };
        // A fresh model fixes the canonical parameter order; the stored
        // values then replace its initial ones name by name.
        let mut model = Model::init(config, self.init.seed).map_err(|e| field("hidden", e))?;
        if model.params().len() != self.params.len() {
            return Err(field(
                "params",
                format!("expected {} tensors, found {}", model.params().len(), self.params.len()),
            ));
        }
        let ids: Vec<_> = model.params().iter().map(|(id, p)| (id, p.name().to_owned())).collect();
        for (id, name) in ids {
            let record = self
                .params
                .get(&name)
                .ok_or_else(|| field("params", format!("missing {name}")))?;
            let [rows, cols] = record.shape;
            let value = Matrix::from_vec(rows, cols, record.data.clone()).map_err(|e| field("params", format!("{name}: {e}")))?;
            model
                .params_mut()
                .set_value(id, value)
                .map_err(|e| field("params", format!("{name}: {e}")))?;
        }
        Ok(Restored {
            model,
            featurizer,
            ingest: IngestConfig {
                negatives_per_page: self.metadata.negatives_per_page,
                subject_node: self.metadata.subject_node,
                seed: self.metadata.ingest_seed,
            },
            metadata: self.metadata.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoints always serialise") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self, CheckpointError> {
        let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_json()).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

impl Restored {
    /// Rejects a caller-supplied vocabulary or mask that disagrees with the
    /// frozen one.
    pub fn check_features(&self, vocab: Option<&TagVocabulary>, mask: Option<&FeatureMask>) -> Result<(), CheckpointError> {
        if vocab.is_some_and(|v| *v != self.featurizer.vocab) {
            return Err(CheckpointError::Mismatch("tag vocabulary"));
        }
        if mask.is_some_and(|m| *m != self.featurizer.mask) {
            return Err(CheckpointError::Mismatch("feature mask"));
        }
        Ok(())
    }
}
