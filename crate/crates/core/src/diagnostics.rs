//! Whole-model gradient checks on random trees.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dom::{ClassLabel, NUM_CLASSES};
use crate::model::{Model, ModelConfig, ModelError, ModelKind};
use crate::numeric::{grad_check, GradCheckReport, NumericError, Tape, RELATIVE_FLOOR};
use crate::reference::{self, DoubleDouble, Real, RefParams};
use crate::tree::{NodeRef, Tree};

/// Random tree with `nodes` nodes in pre-order: node `k` attaches to a
/// uniformly chosen earlier node. Features are uniform in [-1, 1).
pub fn random_tree<R: Rng>(rng: &mut R, nodes: usize, input_dim: usize) -> Tree<Vec<f64>> {
    let items = (0..nodes.max(1))
        .map(|k| {
            let parent = (k > 0).then(|| rng.random_range(0..k));
            let x = (0..input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            (parent, x)
        })
        .collect();
    Tree::from_parents(items).expect("parents precede children")
}

/// Settings of a batch-loss gradient check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckSetup {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub hidden: usize,
    pub trees: usize,
    /// Trees get between 1 and this many nodes.
    pub max_nodes: usize,
    pub seed: u64,
    pub step: f64,
}

impl GradCheckSetup {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        Self {
            kind,
            input_dim: crate::features::FEATURE_DIM,
            hidden: 4,
            trees: 20,
            max_nodes: 10,
            seed,
            step: 1e-5,
        }
    }
}

/// Random trees, one random target and label each.
pub fn random_batch(setup: &GradCheckSetup) -> Vec<(Tree<Vec<f64>>, NodeRef, ClassLabel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    (0..setup.trees)
        .map(|_| {
            let n = rng.random_range(1..=setup.max_nodes.max(1));
            let tree = random_tree(&mut rng, n, setup.input_dim);
            let target = NodeRef(rng.random_range(0..n));
            let label = ClassLabel::ALL[rng.random_range(0..NUM_CLASSES)];
            (tree, target, label)
        })
        .collect()
}

/// Precision of the finite-difference probes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbePrecision {
    /// Probes re-run the tape forward pass in `f64`. Round-off in the loss
    /// leaves roughly `1e-11` absolute error in each difference quotient.
    Double,
    /// Probes run the reference evaluator in double-double arithmetic, so
    /// the quotient carries only the truncation error of the stencil.
    Extended,
}

/// Checks the gradient of the mean batch loss over every parameter of a
/// freshly initialised model.
pub fn model_grad_check(setup: &GradCheckSetup, precision: ProbePrecision) -> Result<GradCheckReport, ModelError> {
    let model = Model::init(
        ModelConfig {
            kind: setup.kind,
            input_dim: setup.input_dim,
            hidden: setup.hidden,
        },
        setup.seed,
    )?;
    let batch = random_batch(setup);
    let items: Vec<_> = batch.iter().map(|(t, n, l)| (t, *n, *l)).collect();
    match precision {
        ProbePrecision::Double => grad_check(model.params(), setup.step, |tape| model.batch_loss(tape, &items)),
        ProbePrecision::Extended => extended_grad_check(&model, &items, setup.step),
    }
}

/// Tape gradient of the mean batch loss against central differences of
/// the double-double reference loss, with the same relative-error
/// measure as [`grad_check`].
pub fn extended_grad_check(
    model: &Model,
    items: &[(&Tree<Vec<f64>>, NodeRef, ClassLabel)],
    step: f64,
) -> Result<GradCheckReport, ModelError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(NumericError::InvalidStep(step).into());
    }
    let analytic = {
        let mut tape = Tape::new(model.params());
        let loss = model.batch_loss(&mut tape, items)?;
        tape.backward(loss)?
    };
    let kind = model.kind();
    let mut probe: RefParams<DoubleDouble> = RefParams::from_params(model.params());
    let h = DoubleDouble::from_f64(step);
    let two_h = DoubleDouble::from_f64(2.0 * step);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for (id, param) in model.params().iter() {
        let name = param.name();
        for k in 0..param.value().data().len() {
            let original = DoubleDouble::from_f64(param.value().data()[k]);
            let mut eval = |value: DoubleDouble| {
                probe.values.get_mut(name).expect("converted from the same set").data[k] = value;
                reference::batch_loss(&probe, kind, items)
            };
            let plus = eval(original + h);
            let minus = eval(original - h);
            probe.values.get_mut(name).expect("converted from the same set").data[k] = original;
            let numeric = ((plus - minus) / two_h).to_f64();
            if !numeric.is_finite() {
                return Err(NumericError::NonFiniteProbe {
                    param: String::from(name),
                    index: k,
                }
                .into());
            }
            let exact = analytic.coordinate(id, k);
            let err = (exact - numeric).abs() / exact.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            report.coordinates += 1;
            if report.worst.is_none() || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = Some((String::from(name), k));
            }
        }
    }
    Ok(report)
}
