use domtree_core::features::{Featurizer, FeatureMask, TagVocabulary};
use domtree_core::synth::{class_band, generate, SynthPage, SynthSpec, SynthTask};
use domtree_core::{ClassLabel, DomNode, NodeRef, Visibility};
use proptest::prelude::*;

fn pages(task: SynthTask, n: usize, seed: u64) -> Vec<SynthPage> {
    generate(&SynthSpec::new(task, n, seed)).unwrap()
}

fn slot(label: ClassLabel) -> usize {
    [ClassLabel::Name, ClassLabel::Price].iter().position(|&l| l == label).unwrap()
}

fn featurizer(pages: &[SynthPage]) -> Featurizer {
    Featurizer::new(TagVocabulary::build(pages.iter().map(|p| &p.page)), FeatureMask::none())
}

#[test]
fn local_targets_sit_in_their_band() {
    let ps = pages(SynthTask::Local, 50, 1);
    assert_eq!(ps.len(), 50);
    for p in &ps {
        assert_eq!(p.planted.len(), 4);
        for t in &p.planted {
            assert_eq!(t.signal, t.target);
            let (lo, hi) = class_band(slot(t.label));
            let fs = p.page.tree.payload(t.target).font_size;
            assert!((lo..hi).contains(&fs), "{fs}");
        }
    }
}

/// With the class-bearing node neutralised, the targets of one gadget see
/// the same root-path and subtree features.
#[test]
fn path_signal_is_the_only_difference() {
    let ps = pages(SynthTask::PathContext, 30, 2);
    let f = featurizer(&ps);
    for p in &ps {
        let mut tree = p.page.tree.clone();
        for t in &p.planted {
            assert_eq!(tree.depth(t.target).unwrap(), tree.depth(t.signal).unwrap() + 2);
            assert!(tree.is_ancestor_or_self(t.signal, t.target));
        }
        tree = tree.map(|k, n| {
            let mut n: DomNode = n.clone();
            if p.planted.iter().any(|t| t.signal == k) {
                n.visibility = Visibility::Visible;
            }
            n
        });
        let feats = f.tree(&tree);
        let view = |t: NodeRef| {
            let path: Vec<Vec<f64>> = tree.path_from_root(t).unwrap().iter().map(|n| feats.payload(*n).clone()).collect();
            let sub: Vec<Vec<f64>> = tree.subtree_nodes(t).unwrap().iter().map(|n| feats.payload(*n).clone()).collect();
            (path, sub)
        };
        // Targets planted under one anchor form a gadget covering every class.
        for a in &p.planted {
            let anchor = tree.parent(a.signal);
            let gadget: Vec<_> = p.planted.iter().filter(|t| tree.parent(t.signal) == anchor).collect();
            assert_eq!(gadget.len(), 2);
            assert_ne!(gadget[0].label, gadget[1].label);
            assert_eq!(view(gadget[0].target), view(gadget[1].target));
        }
    }
}

#[test]
fn sibling_signal_is_off_path_and_outside_subtree() {
    for p in pages(SynthTask::SiblingContext, 30, 3) {
        let tree = &p.page.tree;
        for t in &p.planted {
            assert!(!tree.path_from_root(t.target).unwrap().contains(&t.signal));
            assert!(!tree.subtree_nodes(t.target).unwrap().contains(&t.signal));
            let parent = tree.parent(t.target).unwrap();
            assert_eq!(tree.parent(t.signal), tree.parent(parent));
            let (lo, hi) = class_band(slot(t.label));
            assert!((lo..hi).contains(&tree.payload(t.signal).font_size));
        }
    }
}

/// In the context tasks the target node alone carries no class signal.
#[test]
fn context_targets_look_identical() {
    for task in [SynthTask::PathContext, SynthTask::SiblingContext] {
        let ps = pages(task, 20, 4);
        let first = ps[0].page.tree.payload(ps[0].planted[0].target).clone();
        for p in &ps {
            for t in &p.planted {
                let mut node = p.page.tree.payload(t.target).clone();
                node.label = first.label;
                assert_eq!(node, first, "{task}");
                assert!(p.page.tree.children(t.target).next().is_none());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pages_are_valid_balanced_and_deterministic(task in prop::sample::select(SynthTask::ALL.to_vec()), seed in any::<u64>()) {
        let spec = SynthSpec::new(task, 6, seed);
        let a = generate(&spec).unwrap();
        prop_assert_eq!(&a, &generate(&spec).unwrap());
        for p in &a {
            prop_assert!(p.page.tree.validate().is_empty());
            prop_assert!(p.page.tree.payloads().all(|n| n.check().is_ok()));
            let names = p.planted.iter().filter(|t| t.label == ClassLabel::Name).count();
            prop_assert_eq!(names * 2, p.planted.len());
            prop_assert_eq!(p.page.labeled_count(), p.planted.len());
            for t in &p.planted {
                prop_assert_eq!(p.page.tree.payload(t.target).label, Some(t.label));
            }
        }
    }
}
