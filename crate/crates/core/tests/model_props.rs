mod common;

use common::{max_abs_diff, rng, unit_vec};
use domtree_core::diagnostics::{model_grad_check, random_tree, GradCheckSetup, ProbePrecision};
use domtree_core::lstm::lstm_step;
use domtree_core::model::{compute_node_embeddings, encode_bottom_up, encode_top_down_features};
use domtree_core::reference::{self, RefParams};
use domtree_core::{ClassLabel, Model, ModelConfig, ModelKind, NodeRef, Tape, Tree};
use proptest::prelude::*;
use rand::Rng;

const INPUT: usize = 7;
const HIDDEN: usize = 6;

const DEDICATED: ModelKind = ModelKind::BidirEmbeddings {
    dedicated_context_kernel: true,
};

fn all_kinds() -> Vec<ModelKind> {
    let mut v = ModelKind::ALL.to_vec();
    v.push(DEDICATED);
    v
}

fn model(kind: ModelKind, seed: u64) -> Model {
    Model::init(
        ModelConfig {
            kind,
            input_dim: INPUT,
            hidden: HIDDEN,
        },
        seed,
    )
    .unwrap()
}

fn representation(m: &Model, tree: &Tree<Vec<f64>>, node: NodeRef) -> Vec<f64> {
    let mut tape = Tape::new(m.params());
    let h = m.represent(&mut tape, tree, node).unwrap();
    tape.value(h).to_vec()
}

/// Copy of `tree` with the features of `node` replaced by fresh values.
fn perturb<R: Rng>(tree: &Tree<Vec<f64>>, node: NodeRef, r: &mut R) -> Tree<Vec<f64>> {
    let fresh = unit_vec(r, INPUT).into_iter().map(|v| v * 5.0).collect::<Vec<_>>();
    tree.map(|k, x| if k == node { fresh.clone() } else { x.clone() })
}

fn kind_strategy() -> impl Strategy<Value = ModelKind> {
    prop::sample::select(all_kinds())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn embeddings_equal_independent_bottom_up(seed in any::<u64>(), n in 1usize..25) {
        let m = model(ModelKind::MonoBottomUp, seed);
        let tree = random_tree(&mut rng(seed), n, INPUT);
        let bu = m.bottom_up().unwrap();
        let mut tape = Tape::new(m.params());
        let all = compute_node_embeddings(&mut tape, &tree, bu).unwrap();
        for (k, s) in all.iter().enumerate() {
            let own = encode_bottom_up(&mut tape, &tree, NodeRef(k), bu).unwrap();
            prop_assert!(max_abs_diff(tape.value(s.h), tape.value(own.h)) <= 1e-12);
            prop_assert!(max_abs_diff(tape.value(s.c), tape.value(own.c)) <= 1e-12);
        }
    }

    /// Tape forward pass against the straight-line reference evaluator.
    #[test]
    fn tape_matches_reference(kind in kind_strategy(), seed in any::<u64>(), n in 1usize..15) {
        let m = model(kind, seed);
        let tree = random_tree(&mut rng(seed), n, INPUT);
        let p: RefParams<f64> = RefParams::from_params(m.params());
        for k in 0..n {
            let node = NodeRef(k);
            let mut tape = Tape::new(m.params());
            let rep = m.represent(&mut tape, &tree, node).unwrap();
            let z = m.logits(&mut tape, rep).unwrap();
            prop_assert!(max_abs_diff(tape.value(rep), &reference::represent(&p, kind, &tree, node)) <= 1e-12);
            prop_assert!(max_abs_diff(tape.value(z), &reference::logits(&p, kind, &tree, node)) <= 1e-12);
        }
    }

    #[test]
    fn shared_targets_match_single_targets(kind in kind_strategy(), seed in any::<u64>(), n in 1usize..15) {
        let m = model(kind, seed);
        let tree = random_tree(&mut rng(seed), n, INPUT);
        let nodes: Vec<NodeRef> = (0..n).rev().map(NodeRef).collect();
        let mut tape = Tape::new(m.params());
        let many = m.represent_many(&mut tape, &tree, &nodes).unwrap();
        for (h, &node) in many.iter().zip(&nodes) {
            prop_assert_eq!(tape.value(*h).to_vec(), representation(&m, &tree, node));
        }
        let targets: Vec<(NodeRef, Option<ClassLabel>)> = nodes.iter().map(|&x| (x, Some(ClassLabel::Price))).collect();
        let batched = m.predict_many(&tree, &targets).unwrap();
        for (p, &(node, label)) in batched.iter().zip(&targets) {
            prop_assert_eq!(p, &m.predict(&tree, node, label).unwrap());
        }
    }

    #[test]
    fn probabilities_are_normalised(kind in kind_strategy(), seed in any::<u64>(), n in 1usize..15) {
        let m = model(kind, seed);
        let tree = random_tree(&mut rng(seed), n, INPUT);
        let node = NodeRef(n / 2);
        let p = m.predict(&tree, node, None).unwrap();
        prop_assert!((p.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let best = p.probs.iter().cloned().fold(f64::MIN, f64::max);
        prop_assert_eq!(p.probs[p.predicted.index()], best);
        prop_assert_eq!(representation(&m, &tree, node).len(), kind.representation_width(HIDDEN));
    }

    /// FC reads only the target, MonoBU only the subtree, BidirFeatures
    /// only the subtree and the root path.
    #[test]
    fn context_blindness(kind in prop::sample::select(ModelKind::ALL[..3].to_vec()), seed in any::<u64>(), n in 2usize..20) {
        let m = model(kind, seed);
        let mut r = rng(seed);
        let tree = random_tree(&mut r, n, INPUT);
        let target = NodeRef(r.random_range(0..n));
        let sub = tree.subtree_nodes(target).unwrap();
        let path = tree.path_from_root(target).unwrap();
        let before = m.predict(&tree, target, Some(ClassLabel::Name)).unwrap();
        for k in (0..n).map(NodeRef) {
            let visible = match kind {
                ModelKind::FullyConnected => k == target,
                ModelKind::MonoBottomUp => sub.contains(&k),
                _ => sub.contains(&k) || path.contains(&k),
            };
            if !visible {
                let after = m.predict(&perturb(&tree, k, &mut r), target, Some(ClassLabel::Name)).unwrap();
                prop_assert_eq!(&after, &before);
            }
        }
    }
}

#[test]
fn embeddings_model_sees_off_path_context() {
    // Root with two children; the target is the first child.
    let mut r = rng(3);
    let tree = Tree::from_parents(vec![(None, unit_vec(&mut r, INPUT)), (Some(0), unit_vec(&mut r, INPUT)), (Some(0), unit_vec(&mut r, INPUT))]).unwrap();
    let changed = perturb(&tree, NodeRef(2), &mut r);
    for kind in [ModelKind::ALL[3], DEDICATED] {
        let m = model(kind, 1);
        assert_ne!(representation(&m, &tree, NodeRef(1)), representation(&m, &changed, NodeRef(1)), "{kind}");
    }
    for kind in &ModelKind::ALL[..3] {
        let m = model(*kind, 1);
        assert_eq!(representation(&m, &tree, NodeRef(1)), representation(&m, &changed, NodeRef(1)), "{kind}");
    }
}

#[test]
fn top_down_features_chain_steps_along_path() {
    let m = model(ModelKind::BidirFeatures, 4);
    let td = m.top_down().unwrap();
    let mut r = rng(4);
    let tree = Tree::from_parents(vec![
        (None, unit_vec(&mut r, INPUT)),
        (Some(0), unit_vec(&mut r, INPUT)),
        (Some(0), unit_vec(&mut r, INPUT)),
        (Some(2), unit_vec(&mut r, INPUT)),
    ])
    .unwrap();
    let mut tape = Tape::new(m.params());
    let got = encode_top_down_features(&mut tape, &tree, NodeRef(3), td).unwrap();
    let mut s = td.zero_state(&mut tape);
    for k in [0, 2, 3] {
        let x = tape.vector(tree.payload(NodeRef(k))).unwrap();
        s = lstm_step(&mut tape, td, x, s).unwrap();
    }
    assert_eq!(tape.value(got), tape.value(s.h));
}

#[test]
fn single_node_embeddings_model_steps_once_over_own_embedding() {
    let m = model(ModelKind::ALL[3], 5);
    let tree = Tree::from_parents(vec![(None, unit_vec(&mut rng(5), INPUT))]).unwrap();
    let (bu, td) = (m.bottom_up().unwrap(), m.top_down().unwrap());
    let mut tape = Tape::new(m.params());
    let up = encode_bottom_up(&mut tape, &tree, NodeRef(0), bu).unwrap();
    let zero = td.zero_state(&mut tape);
    let down = lstm_step(&mut tape, td, up.h, zero).unwrap();
    let mut expected = tape.value(up.h).to_vec();
    expected.extend_from_slice(tape.value(down.h));
    assert_eq!(representation(&m, &tree, NodeRef(0)), expected);
}

#[test]
fn zero_parameters_give_zero_states() {
    for kind in [ModelKind::MonoBottomUp, ModelKind::BidirFeatures, ModelKind::ALL[3]] {
        let mut m = model(kind, 6);
        let ids: Vec<_> = m.params().iter().map(|(id, _)| id).collect();
        for id in ids {
            m.params_mut().value_mut(id).fill(0.0);
        }
        let tree = random_tree(&mut rng(6), 9, INPUT);
        assert!(representation(&m, &tree, NodeRef(0)).iter().all(|v| *v == 0.0), "{kind}");
        let p = m.predict(&tree, NodeRef(0), Some(ClassLabel::Cart)).unwrap();
        assert!(p.probs.iter().all(|v| (v - 1.0 / 7.0).abs() < 1e-15));
        assert!((p.loss.unwrap() - 7f64.ln()).abs() < 1e-15);
    }
}

#[test]
fn dedicated_kernel_gradient_reaches_both_kernels() {
    let mut setup = GradCheckSetup::new(DEDICATED, 21);
    setup.trees = 4;
    setup.max_nodes = 6;
    setup.input_dim = 8;
    let report = model_grad_check(&setup, ProbePrecision::Extended).unwrap();
    assert!(report.passes(1e-6), "{report:?}");
    let m = Model::init(
        ModelConfig {
            kind: DEDICATED,
            input_dim: 8,
            hidden: setup.hidden,
        },
        21,
    )
    .unwrap();
    let names: Vec<&str> = m.params().iter().map(|(_, p)| p.name()).collect();
    assert!(names.iter().any(|n| n.starts_with("ctx.")) && names.iter().any(|n| n.starts_with("bu.")));
}

#[test]
fn repeated_inference_is_identical() {
    for kind in all_kinds() {
        let m = model(kind, 8);
        let tree = random_tree(&mut rng(8), 12, INPUT);
        assert_eq!(m.predict(&tree, NodeRef(3), None).unwrap(), m.predict(&tree, NodeRef(3), None).unwrap());
    }
}
