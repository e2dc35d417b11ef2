use domtree_core::synth::{generate, SynthSpec, SynthTask};
use domtree_core::train::{self, TrainConfig};
use domtree_core::{
    Dataset, FeatureMask, Featurizer, IngestConfig, Model, ModelConfig, ModelKind, Page, Sequential, Tape, TagVocabulary,
};

const INGEST: IngestConfig = IngestConfig {
    negatives_per_page: 0,
    subject_node: false,
    seed: 0,
};

fn split(task: SynthTask, pages: usize, train_pages: usize, seed: u64) -> (usize, Dataset, Dataset) {
    let ps: Vec<Page> = generate(&SynthSpec::new(task, pages, seed))
        .unwrap()
        .into_iter()
        .map(|p| p.page)
        .collect();
    let (tr, va) = ps.split_at(train_pages);
    let f = Featurizer::new(TagVocabulary::build(tr.iter()), FeatureMask::none());
    let (a, _) = Dataset::ingest(tr.iter(), &f, &INGEST);
    let (b, _) = Dataset::ingest(va.iter(), &f, &INGEST);
    (f.input_dim(), a, b)
}

fn small(kind: ModelKind) -> TrainConfig {
    let mut c = TrainConfig::new(kind);
    c.hidden = 8;
    c.epochs = 3;
    c.batch_size = 7;
    c.seed = 5;
    c
}

#[test]
fn zero_learning_rate_keeps_initialisation() {
    let (dim, tr, va) = split(SynthTask::Local, 6, 4, 1);
    for kind in ModelKind::ALL {
        let mut c = small(kind);
        c.learning_rate = 0.0;
        let out = train::train(&c, dim, &tr, &va, &Sequential).unwrap();
        let init = Model::init(
            ModelConfig {
                kind,
                input_dim: dim,
                hidden: 8,
            },
            c.seed,
        )
        .unwrap();
        assert_eq!(out.best.params().iter().map(|(_, p)| p.value().clone()).collect::<Vec<_>>(),
                   init.params().iter().map(|(_, p)| p.value().clone()).collect::<Vec<_>>());
        assert_eq!(out.best_epoch, 1);
        assert_eq!(out.log.len(), 3);
    }
}

/// One full-batch epoch equals a plain SGD step on the mean loss recorded
/// example by example on a single tape.
#[test]
fn page_grouped_step_equals_mean_gradient_step() {
    let (dim, tr, va) = split(SynthTask::SiblingContext, 6, 4, 2);
    for kind in ModelKind::ALL {
        let mut c = small(kind);
        c.epochs = 1;
        c.batch_size = tr.len();
        c.learning_rate = 0.5;
        let out = train::train(&c, dim, &tr, &va, &Sequential).unwrap();

        let mut manual = Model::init(
            ModelConfig {
                kind,
                input_dim: dim,
                hidden: 8,
            },
            c.seed,
        )
        .unwrap();
        let items: Vec<_> = tr
            .examples
            .iter()
            .map(|e| (&tr.pages[e.page], e.target, e.label))
            .collect();
        let grads = {
            let mut tape = Tape::new(manual.params());
            let loss = manual.batch_loss(&mut tape, &items).unwrap();
            tape.backward(loss).unwrap()
        };
        manual.params_mut().accumulate(&grads, 1.0);
        manual.params_mut().sgd_step(0.5).unwrap();

        let mut worst: f64 = 0.0;
        for ((_, a), (_, b)) in out.best.params().iter().zip(manual.params().iter()) {
            assert_eq!(a.name(), b.name());
            for (x, y) in a.value().data().iter().zip(b.value().data()) {
                worst = worst.max((x - y).abs());
            }
        }
        assert!(worst < 1e-13, "{kind}: {worst}");
    }
}

#[test]
fn training_is_deterministic() {
    let (dim, tr, va) = split(SynthTask::PathContext, 6, 4, 3);
    for kind in ModelKind::ALL {
        let c = small(kind);
        let a = train::train(&c, dim, &tr, &va, &Sequential).unwrap();
        let b = train::train(&c, dim, &tr, &va, &Sequential).unwrap();
        assert_eq!(a, b, "{kind}");
    }
}

#[test]
fn best_epoch_has_lowest_validation_loss() {
    let (dim, tr, va) = split(SynthTask::Local, 12, 8, 4);
    let mut c = small(ModelKind::FullyConnected);
    c.epochs = 20;
    c.learning_rate = 0.05;
    let out = train::train(&c, dim, &tr, &va, &Sequential).unwrap();
    assert!(out.log.iter().all(|e| out.best_val_loss <= e.val_loss));
    let first = out.log.iter().position(|e| e.val_loss == out.best_val_loss).unwrap();
    assert_eq!(out.best_epoch, out.log[first].epoch);
    assert_eq!(out.log.iter().map(|e| e.epoch).collect::<Vec<_>>(), (1..=20).collect::<Vec<_>>());
}

#[test]
fn local_task_loss_decreases_over_default_schedule() {
    let (dim, tr, va) = split(SynthTask::Local, 70, 50, 6);
    let c = TrainConfig::new(ModelKind::FullyConnected);
    let out = train::train(&c, dim, &tr, &va, &Sequential).unwrap();
    assert_eq!(out.log.len(), 150);
    assert!(out.log.last().unwrap().train_loss < out.log[0].train_loss);
}

#[test]
fn rejects_bad_configuration_and_empty_splits() {
    let (dim, tr, va) = split(SynthTask::Local, 3, 2, 7);
    let mut c = small(ModelKind::FullyConnected);
    c.epochs = 0;
    assert!(train::train(&c, dim, &tr, &va, &Sequential).is_err());
    let c = small(ModelKind::FullyConnected);
    assert!(train::train(&c, dim, &Dataset::default(), &va, &Sequential).is_err());
    assert!(train::train(&c, dim, &tr, &Dataset::default(), &Sequential).is_err());
}
