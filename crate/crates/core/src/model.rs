//! The four subtree classifiers and their shared softmax head.
//!
//! Every model maps `(tree, node)` to a representation vector, then to
//! seven class probabilities. Inputs are trees whose payload is the node's
//! feature vector.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dom::{ClassLabel, UnknownName, NUM_CLASSES};
use crate::lstm::{self, child_sum_step, glorot_matrix, lstm_step, BindError, CellState, LstmParams};
use crate::numeric::{self, Handle, Matrix, NumericError, ParamId, ParamSet, Shape, Tape};
use crate::tree::{NodeRef, Tree, TreeError};

/// Smallest probability fed to the log in [`loss_nll`].
pub const PROB_FLOOR: f64 = 1e-300;

/// Which classifier to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Two dense layers over the target node's own features.
    FullyConnected,
    /// Child-Sum Tree-LSTM over the target's subtree.
    MonoBottomUp,
    /// Bottom-up state concatenated with a sequential LSTM over the
    /// features of the root-to-target path.
    BidirFeatures,
    /// Bottom-up state concatenated with a sequential LSTM over the
    /// bottom-up embeddings of the root-to-target path. Optionally the
    /// embeddings come from a second, dedicated bottom-up kernel.
    BidirEmbeddings { dedicated_context_kernel: bool },
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::FullyConnected,
        ModelKind::MonoBottomUp,
        ModelKind::BidirFeatures,
        ModelKind::BidirEmbeddings {
            dedicated_context_kernel: false,
        },
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::FullyConnected => "fc",
            ModelKind::MonoBottomUp => "mono-bu",
            ModelKind::BidirFeatures => "bidir-features",
            ModelKind::BidirEmbeddings { .. } => "bidir-embeddings",
        }
    }

    pub fn dedicated_context_kernel(self) -> bool {
        matches!(
            self,
            ModelKind::BidirEmbeddings {
                dedicated_context_kernel: true
            }
        )
    }

    /// Width of the representation fed to the head.
    pub fn representation_width(self, hidden: usize) -> usize {
        match self {
            ModelKind::FullyConnected | ModelKind::MonoBottomUp => hidden,
            ModelKind::BidirFeatures | ModelKind::BidirEmbeddings { .. } => 2 * hidden,
        }
    }

    /// Parses a kind name, attaching the dedicated-kernel flag, which is
    /// only meaningful for `bidir-embeddings`.
    pub fn parse_with_flag(name: &str, dedicated_context_kernel: bool) -> Result<Self, ModelError> {
        let kind: ModelKind = name.parse()?;
        match kind {
            ModelKind::BidirEmbeddings { .. } => Ok(ModelKind::BidirEmbeddings {
                dedicated_context_kernel,
            }),
            other if dedicated_context_kernel => Err(ModelError::DedicatedKernelUnsupported(other)),
            other => Ok(other),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| UnknownName {
            kind: "model kind",
            value: s.into(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Bind(#[from] BindError),
    #[error(transparent)]
    UnknownName(#[from] UnknownName),
    #[error("feature vector of node {node} has width {found}, model expects {expected}")]
    InputWidth { node: usize, found: usize, expected: usize },
    #[error("dedicated context kernel is only available for bidir-embeddings, not {0}")]
    DedicatedKernelUnsupported(ModelKind),
    #[error("hidden width and input width must be positive")]
    EmptyDimensions,
}

/// Architecture hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub hidden: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Encoder {
    FullyConnected { w: ParamId, b: ParamId },
    MonoBottomUp { bu: LstmParams },
    BidirFeatures { bu: LstmParams, td: LstmParams },
    BidirEmbeddings { bu: LstmParams, td: LstmParams, context: Option<LstmParams> },
}

/// Parameters plus the wiring of one classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: ParamSet,
    encoder: Encoder,
    head_w: ParamId,
    head_b: ParamId,
}

impl Model {
    /// Fresh parameters drawn from `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        if config.hidden == 0 || config.input_dim == 0 {
            return Err(ModelError::EmptyDimensions);
        }
        let ModelConfig { kind, input_dim, hidden } = config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let encoder = match kind {
            ModelKind::FullyConnected => {
                let w = params.insert("fc.W", glorot_matrix(hidden, input_dim, &mut rng))?;
                let b = params.insert("fc.b", Matrix::zeros(hidden, 1))?;
                Encoder::FullyConnected { w, b }
            }
            ModelKind::MonoBottomUp => Encoder::MonoBottomUp {
                bu: LstmParams::register(&mut params, "bu", input_dim, hidden, &mut rng)?,
            },
            ModelKind::BidirFeatures => Encoder::BidirFeatures {
                bu: LstmParams::register(&mut params, "bu", input_dim, hidden, &mut rng)?,
                td: LstmParams::register(&mut params, "td", input_dim, hidden, &mut rng)?,
            },
            ModelKind::BidirEmbeddings {
                dedicated_context_kernel,
            } => {
                let bu = LstmParams::register(&mut params, "bu", input_dim, hidden, &mut rng)?;
                let td = LstmParams::register(&mut params, "td", hidden, hidden, &mut rng)?;
                let context = if dedicated_context_kernel {
                    Some(LstmParams::register(&mut params, "ctx", input_dim, hidden, &mut rng)?)
                } else {
                    None
                };
                Encoder::BidirEmbeddings { bu, td, context }
            }
        };
        let width = kind.representation_width(hidden);
        let head_w = params.insert("head.W", glorot_matrix(NUM_CLASSES, width, &mut rng))?;
        let head_b = params.insert("head.b", Matrix::zeros(NUM_CLASSES, 1))?;
        Ok(Self {
            config,
            params,
            encoder,
            head_w,
            head_b,
        })
    }

    /// Rebuilds a model around existing parameters, matched by name and
    /// shape. Extra parameters are rejected.
    pub fn from_params(config: ModelConfig, params: ParamSet) -> Result<Self, ModelError> {
        let ModelConfig { kind, input_dim, hidden } = config;
        let encoder = match kind {
            ModelKind::FullyConnected => Encoder::FullyConnected {
                w: lstm::lookup(&params, "fc.W", Shape::new(hidden, input_dim))?,
                b: lstm::lookup(&params, "fc.b", Shape::vector(hidden))?,
            },
            ModelKind::MonoBottomUp => Encoder::MonoBottomUp {
                bu: LstmParams::bind(&params, "bu", input_dim, hidden)?,
            },
            ModelKind::BidirFeatures => Encoder::BidirFeatures {
                bu: LstmParams::bind(&params, "bu", input_dim, hidden)?,
                td: LstmParams::bind(&params, "td", input_dim, hidden)?,
            },
            ModelKind::BidirEmbeddings {
                dedicated_context_kernel,
            } => Encoder::BidirEmbeddings {
                bu: LstmParams::bind(&params, "bu", input_dim, hidden)?,
                td: LstmParams::bind(&params, "td", hidden, hidden)?,
                context: if dedicated_context_kernel {
                    Some(LstmParams::bind(&params, "ctx", input_dim, hidden)?)
                } else {
                    None
                },
            },
        };
        let width = kind.representation_width(hidden);
        let head_w = lstm::lookup(&params, "head.W", Shape::new(NUM_CLASSES, width))?;
        let head_b = lstm::lookup(&params, "head.b", Shape::vector(NUM_CLASSES))?;
        let model = Self {
            config,
            params,
            encoder,
            head_w,
            head_b,
        };
        let expected = Model::init(config, 0)?.params.len();
        if model.params.len() != expected {
            return Err(ModelError::Bind(BindError::Missing(alloc::format!(
                "expected {expected} parameters, found {}",
                model.params.len()
            ))));
        }
        Ok(model)
    }

    pub fn config(&self) -> ModelConfig {
        self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// The bottom-up kernel, if the model has one.
    pub fn bottom_up(&self) -> Option<&LstmParams> {
        match &self.encoder {
            Encoder::FullyConnected { .. } => None,
            Encoder::MonoBottomUp { bu } | Encoder::BidirFeatures { bu, .. } | Encoder::BidirEmbeddings { bu, .. } => {
                Some(bu)
            }
        }
    }

    /// The top-down kernel, if the model has one.
    pub fn top_down(&self) -> Option<&LstmParams> {
        match &self.encoder {
            Encoder::BidirFeatures { td, .. } | Encoder::BidirEmbeddings { td, .. } => Some(td),
            _ => None,
        }
    }

    /// The dedicated context kernel of a `BidirEmbeddings` model.
    pub fn context_kernel(&self) -> Option<&LstmParams> {
        match &self.encoder {
            Encoder::BidirEmbeddings { context, .. } => context.as_ref(),
            _ => None,
        }
    }

    fn check_inputs(&self, tree: &Tree<Vec<f64>>) -> Result<(), ModelError> {
        for (k, x) in tree.payloads().enumerate() {
            if x.len() != self.config.input_dim {
                return Err(ModelError::InputWidth {
                    node: k,
                    found: x.len(),
                    expected: self.config.input_dim,
                });
            }
        }
        Ok(())
    }

    /// Representation of the subtree rooted at `node`.
    pub fn represent(&self, tape: &mut Tape<'_>, tree: &Tree<Vec<f64>>, node: NodeRef) -> Result<Handle, ModelError> {
        Ok(self.represent_many(tape, tree, &[node])?[0])
    }

    /// Representations of several targets of one tree. Work that does not
    /// depend on the target (the full-tree embeddings of
    /// `BidirEmbeddings`) is recorded once and shared.
    pub fn represent_many(
        &self,
        tape: &mut Tape<'_>,
        tree: &Tree<Vec<f64>>,
        nodes: &[NodeRef],
    ) -> Result<Vec<Handle>, ModelError> {
        for &node in nodes {
            tree.check(node)?;
        }
        self.check_inputs(tree)?;
        match &self.encoder {
            Encoder::FullyConnected { w, b } => nodes
                .iter()
                .map(|&node| {
                    let x = tape.vector(tree.payload(node))?;
                    let z = tape.affine(*w, *b, x)?;
                    Ok(tape.tanh(z)?)
                })
                .collect(),
            Encoder::MonoBottomUp { bu } => nodes
                .iter()
                .map(|&node| Ok(encode_bottom_up(tape, tree, node, bu)?.h))
                .collect(),
            Encoder::BidirFeatures { bu, td } => nodes
                .iter()
                .map(|&node| {
                    let up = encode_bottom_up(tape, tree, node, bu)?.h;
                    let down = encode_top_down_features(tape, tree, node, td)?;
                    Ok(tape.concat(&[up, down])?)
                })
                .collect(),
            Encoder::BidirEmbeddings { bu, td, context } => {
                let embeddings = compute_node_embeddings(tape, tree, bu)?;
                let ctx_embeddings = match context {
                    None => None,
                    Some(ctx) => Some(compute_node_embeddings(tape, tree, ctx)?),
                };
                let inputs = ctx_embeddings.as_deref().unwrap_or(&embeddings);
                nodes
                    .iter()
                    .map(|&node| {
                        let up = embeddings[node.0].h;
                        let down = top_down_over(tape, tree, node, td, inputs)?;
                        Ok(tape.concat(&[up, down])?)
                    })
                    .collect()
            }
        }
    }

    /// Head logits `W·rep + b`.
    pub fn logits(&self, tape: &mut Tape<'_>, representation: Handle) -> Result<Handle, ModelError> {
        Ok(tape.affine(self.head_w, self.head_b, representation)?)
    }

    /// Class probabilities for one target node.
    pub fn probabilities(&self, tape: &mut Tape<'_>, tree: &Tree<Vec<f64>>, node: NodeRef) -> Result<Handle, ModelError> {
        let rep = self.represent(tape, tree, node)?;
        let logits = self.logits(tape, rep)?;
        Ok(tape.softmax(logits)?)
    }

    /// Negative log-likelihood of `label` for one target node.
    pub fn example_loss(
        &self,
        tape: &mut Tape<'_>,
        tree: &Tree<Vec<f64>>,
        node: NodeRef,
        label: ClassLabel,
    ) -> Result<Handle, ModelError> {
        let rep = self.represent(tape, tree, node)?;
        self.loss_of(tape, rep, label)
    }

    fn loss_of(&self, tape: &mut Tape<'_>, representation: Handle, label: ClassLabel) -> Result<Handle, ModelError> {
        let logits = self.logits(tape, representation)?;
        let probs = tape.softmax(logits)?;
        let p = tape.select(probs, label.index())?;
        let ln = tape.ln(p)?;
        Ok(tape.scale(ln, -1.0)?)
    }

    /// Per-target losses of several targets of one tree, sharing
    /// target-independent work as [`Model::represent_many`] does.
    pub fn tree_losses(
        &self,
        tape: &mut Tape<'_>,
        tree: &Tree<Vec<f64>>,
        targets: &[(NodeRef, ClassLabel)],
    ) -> Result<Vec<Handle>, ModelError> {
        let nodes: Vec<NodeRef> = targets.iter().map(|(n, _)| *n).collect();
        let reps = self.represent_many(tape, tree, &nodes)?;
        reps.into_iter()
            .zip(targets)
            .map(|(rep, (_, label))| self.loss_of(tape, rep, *label))
            .collect()
    }

    /// Mean loss over several targets recorded on one tape.
    pub fn batch_loss(
        &self,
        tape: &mut Tape<'_>,
        items: &[(&Tree<Vec<f64>>, NodeRef, ClassLabel)],
    ) -> Result<Handle, ModelError> {
        let losses = items
            .iter()
            .map(|(tree, node, label)| self.example_loss(tape, tree, *node, *label))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(tape.mean(&losses)?)
    }

    /// Inference for one target node.
    pub fn predict(&self, tree: &Tree<Vec<f64>>, node: NodeRef, label: Option<ClassLabel>) -> Result<Prediction, ModelError> {
        Ok(self.predict_many(tree, &[(node, label)])?.remove(0))
    }

    /// Inference for several targets of one tree.
    pub fn predict_many(
        &self,
        tree: &Tree<Vec<f64>>,
        targets: &[(NodeRef, Option<ClassLabel>)],
    ) -> Result<Vec<Prediction>, ModelError> {
        let mut tape = Tape::new(&self.params);
        let nodes: Vec<NodeRef> = targets.iter().map(|(n, _)| *n).collect();
        let reps = self.represent_many(&mut tape, tree, &nodes)?;
        reps.into_iter()
            .zip(targets)
            .map(|(rep, (_, label))| {
                let logits = self.logits(&mut tape, rep)?;
                let mut prediction = classify(tape.value(logits))?;
                prediction.loss = label.map(|l| loss_nll(&prediction.probs, l));
                Ok(prediction)
            })
            .collect()
    }
}

/// Bottom-up Child-Sum recursion over the subtree rooted at `node`,
/// children before parents, each node consuming its own features.
pub fn encode_bottom_up(
    tape: &mut Tape<'_>,
    tree: &Tree<Vec<f64>>,
    node: NodeRef,
    bu: &LstmParams,
) -> Result<CellState, ModelError> {
    let order = tree.subtree_nodes(node)?;
    let mut states: Vec<Option<CellState>> = alloc::vec![None; tree.len()];
    // Reverse pre-order visits every child before its parent.
    for &n in order.iter().rev() {
        let children: Vec<CellState> = tree
            .children(n)
            .map(|c| states[c.0].expect("child state computed first"))
            .collect();
        let x = tape.vector(tree.payload(n))?;
        states[n.0] = Some(child_sum_step(tape, bu, x, &children)?);
    }
    Ok(states[node.0].expect("target state computed"))
}

/// Bottom-up states of every node of the tree from a single pass.
pub fn compute_node_embeddings(
    tape: &mut Tape<'_>,
    tree: &Tree<Vec<f64>>,
    bu: &LstmParams,
) -> Result<Vec<CellState>, ModelError> {
    let mut states: Vec<Option<CellState>> = alloc::vec![None; tree.len()];
    // Parents precede children in storage order.
    for k in (0..tree.len()).rev() {
        let n = NodeRef(k);
        let children: Vec<CellState> = tree
            .children(n)
            .map(|c| states[c.0].expect("child state computed first"))
            .collect();
        let x = tape.vector(tree.payload(n))?;
        states[k] = Some(child_sum_step(tape, bu, x, &children)?);
    }
    Ok(states.into_iter().map(|s| s.expect("all states computed")).collect())
}

/// Sequential LSTM along the root-to-`node` path over node features,
/// starting from a zero state. Returns the final hidden state.
pub fn encode_top_down_features(
    tape: &mut Tape<'_>,
    tree: &Tree<Vec<f64>>,
    node: NodeRef,
    td: &LstmParams,
) -> Result<Handle, ModelError> {
    let path = tree.path_from_root(node)?;
    let mut state = td.zero_state(tape);
    for n in path {
        let x = tape.vector(tree.payload(n))?;
        state = lstm_step(tape, td, x, state)?;
    }
    Ok(state.h)
}

/// Sequential LSTM along the root-to-`node` path whose inputs are the
/// bottom-up embeddings (hidden states) of the path nodes, computed with
/// `embedding_kernel`.
pub fn encode_top_down_embeddings(
    tape: &mut Tape<'_>,
    tree: &Tree<Vec<f64>>,
    node: NodeRef,
    embedding_kernel: &LstmParams,
    td: &LstmParams,
) -> Result<Handle, ModelError> {
    let embeddings = compute_node_embeddings(tape, tree, embedding_kernel)?;
    top_down_over(tape, tree, node, td, &embeddings)
}

fn top_down_over(
    tape: &mut Tape<'_>,
    tree: &Tree<Vec<f64>>,
    node: NodeRef,
    td: &LstmParams,
    embeddings: &[CellState],
) -> Result<Handle, ModelError> {
    let path = tree.path_from_root(node)?;
    let mut state = td.zero_state(tape);
    for n in path {
        state = lstm_step(tape, td, embeddings[n.0].h, state)?;
    }
    Ok(state.h)
}

/// Output of the softmax head.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probs: [f64; NUM_CLASSES],
    pub predicted: ClassLabel,
    pub loss: Option<f64>,
}

/// Stable softmax over head logits; the prediction is the first maximum.
pub fn classify(logits: &[f64]) -> Result<Prediction, ModelError> {
    if logits.len() != NUM_CLASSES {
        return Err(NumericError::ShapeMismatch {
            op: "classify",
            left: Shape::vector(logits.len()),
            right: Shape::vector(NUM_CLASSES),
        }
        .into());
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(NumericError::NonFinite { op: "classify" }.into());
    }
    let p = numeric::softmax(logits);
    let mut probs = [0.0; NUM_CLASSES];
    probs.copy_from_slice(&p);
    Ok(Prediction {
        probs,
        predicted: argmax(&probs),
        loss: None,
    })
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64; NUM_CLASSES]) -> ClassLabel {
    let mut best = 0;
    for i in 1..NUM_CLASSES {
        if values[i] > values[best] {
            best = i;
        }
    }
    ClassLabel::ALL[best]
}

/// `-ln p[label]`, with the probability clamped at [`PROB_FLOOR`].
pub fn loss_nll(probs: &[f64; NUM_CLASSES], label: ClassLabel) -> f64 {
    let p = probs[label.index()];
    if p < PROB_FLOOR {
        log::warn!("probability of {label} is {p}; clamped to {PROB_FLOOR}");
        return -libm::log(PROB_FLOOR);
    }
    -libm::log(p)
}
