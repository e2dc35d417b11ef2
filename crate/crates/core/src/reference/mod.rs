//! Straight-line evaluation of the classifiers' forward pass, written
//! directly from the cell equations and independent of the tape. It is
//! generic over the scalar type so it can run in double-double precision,
//! which turns it into a finite-difference oracle with negligible
//! round-off.
//!
//! Everything is recomputed from scratch: bottom-up states recurse over
//! the subtree on every call and the top-down embedding inputs are
//! separate bottom-up evaluations, sharing nothing with the batched
//! full-tree pass the models use.

mod real;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

pub use real::{DoubleDouble, Real};

use crate::dom::ClassLabel;
use crate::model::ModelKind;
use crate::numeric::ParamSet;
use crate::tree::{NodeRef, Tree};

#[derive(Clone, Debug, PartialEq)]
pub struct RefMatrix<R> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<R>,
}

/// Parameter values by name, converted to `R`.
#[derive(Clone, Debug, PartialEq)]
pub struct RefParams<R> {
    pub values: BTreeMap<String, RefMatrix<R>>,
}

impl<R: Real> RefParams<R> {
    pub fn from_params(params: &ParamSet) -> Self {
        let values = params
            .iter()
            .map(|(_, p)| {
                let v = p.value();
                (
                    String::from(p.name()),
                    RefMatrix {
                        rows: v.rows(),
                        cols: v.cols(),
                        data: v.data().iter().map(|&x| R::from_f64(x)).collect(),
                    },
                )
            })
            .collect();
        Self { values }
    }

    fn get(&self, name: &str) -> &RefMatrix<R> {
        self.values
            .get(name)
            .unwrap_or_else(|| panic!("reference evaluation needs parameter {name}"))
    }

    fn kernel(&self, prefix: &str) -> Kernel<'_, R> {
        let gate = |g: char| Gate {
            w: self.get(&format!("{prefix}.W_{g}")),
            u: self.get(&format!("{prefix}.U_{g}")),
            b: self.get(&format!("{prefix}.b_{g}")),
        };
        Kernel {
            i: gate('i'),
            a: gate('a'),
            o: gate('o'),
            f: gate('f'),
        }
    }
}

fn affine<R: Real>(m: &RefMatrix<R>, x: &[R], b: Option<&RefMatrix<R>>) -> Vec<R> {
    assert_eq!(m.cols, x.len(), "width mismatch");
    (0..m.rows)
        .map(|r| {
            let row = &m.data[r * m.cols..(r + 1) * m.cols];
            let mut acc = b.map_or(R::zero(), |b| b.data[r]);
            for (w, x) in row.iter().zip(x) {
                acc = acc + *w * *x;
            }
            acc
        })
        .collect()
}

struct Gate<'a, R> {
    w: &'a RefMatrix<R>,
    u: &'a RefMatrix<R>,
    b: &'a RefMatrix<R>,
}

impl<R: Real> Gate<'_, R> {
    fn input(&self, x: &[R]) -> Vec<R> {
        affine(self.w, x, Some(self.b))
    }

    /// `W x + b` precomputed, plus `U h`.
    fn with_hidden(&self, wx: &[R], h: &[R]) -> Vec<R> {
        zip(wx, &affine(self.u, h, None), |a, b| a + b)
    }

    fn eval(&self, x: &[R], h: &[R]) -> Vec<R> {
        self.with_hidden(&self.input(x), h)
    }
}

/// The four gates of one kernel, looked up once.
pub struct Kernel<'a, R> {
    i: Gate<'a, R>,
    a: Gate<'a, R>,
    o: Gate<'a, R>,
    f: Gate<'a, R>,
}

impl<R> Kernel<'_, R> {
    fn hidden(&self) -> usize {
        self.i.b.rows
    }
}

/// Hidden and cell state.
pub type State<R> = (Vec<R>, Vec<R>);

fn map<R: Real>(v: &[R], f: impl Fn(R) -> R) -> Vec<R> {
    v.iter().map(|&x| f(x)).collect()
}

fn zip<R: Real>(a: &[R], b: &[R], f: impl Fn(R, R) -> R) -> Vec<R> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

/// One step of the sequential LSTM.
pub fn lstm_step<R: Real>(k: &Kernel<'_, R>, x: &[R], prev: &State<R>) -> State<R> {
    let (h, c) = prev;
    let i = map(&k.i.eval(x, h), R::sigmoid);
    let a = map(&k.a.eval(x, h), R::tanh);
    let o = map(&k.o.eval(x, h), R::sigmoid);
    let f = map(&k.f.eval(x, h), R::sigmoid);
    let c: Vec<R> = (0..i.len()).map(|j| i[j] * a[j] + f[j] * c[j]).collect();
    let h = zip(&o, &c, |o, c| o * c.tanh());
    (h, c)
}

/// One Child-Sum cell over the children's states.
pub fn child_sum_step<R: Real>(k: &Kernel<'_, R>, x: &[R], children: &[State<R>]) -> State<R> {
    let n = k.hidden();
    let mut h_sum = alloc::vec![R::zero(); n];
    for (h, _) in children {
        h_sum = zip(&h_sum, h, |a, b| a + b);
    }
    let i = map(&k.i.eval(x, &h_sum), R::sigmoid);
    let a = map(&k.a.eval(x, &h_sum), R::tanh);
    let o = map(&k.o.eval(x, &h_sum), R::sigmoid);
    let mut c = zip(&i, &a, |i, a| i * a);
    let wf = k.f.input(x);
    for (h_k, c_k) in children {
        let f_k = map(&k.f.with_hidden(&wf, h_k), R::sigmoid);
        for j in 0..n {
            c[j] = c[j] + f_k[j] * c_k[j];
        }
    }
    let h = zip(&o, &c, |o, c| o * c.tanh());
    (h, c)
}

fn features<R: Real>(tree: &Tree<Vec<f64>>, node: NodeRef) -> Vec<R> {
    tree.payload(node).iter().map(|&x| R::from_f64(x)).collect()
}

/// Recursive bottom-up state of `node`'s subtree.
pub fn bottom_up<R: Real>(k: &Kernel<'_, R>, tree: &Tree<Vec<f64>>, node: NodeRef) -> State<R> {
    let children: Vec<State<R>> = tree.children(node).map(|c| bottom_up(k, tree, c)).collect();
    child_sum_step(k, &features(tree, node), &children)
}

fn path(tree: &Tree<Vec<f64>>, node: NodeRef) -> Vec<NodeRef> {
    let mut path = alloc::vec![node];
    let mut cur = node;
    while let Some(parent) = tree.parent(cur) {
        path.push(parent);
        cur = parent;
    }
    path.reverse();
    path
}

fn run_lstm<R: Real>(k: &Kernel<'_, R>, inputs: impl Iterator<Item = Vec<R>>) -> Vec<R> {
    let n = k.hidden();
    let mut state = (alloc::vec![R::zero(); n], alloc::vec![R::zero(); n]);
    for x in inputs {
        state = lstm_step(k, &x, &state);
    }
    state.0
}

/// Representation vector of `node` for a model of `kind`.
pub fn represent<R: Real>(p: &RefParams<R>, kind: ModelKind, tree: &Tree<Vec<f64>>, node: NodeRef) -> Vec<R> {
    match kind {
        ModelKind::FullyConnected => map(&affine(p.get("fc.W"), &features(tree, node), Some(p.get("fc.b"))), R::tanh),
        ModelKind::MonoBottomUp => bottom_up(&p.kernel("bu"), tree, node).0,
        ModelKind::BidirFeatures => {
            let mut rep = bottom_up(&p.kernel("bu"), tree, node).0;
            rep.extend(run_lstm(&p.kernel("td"), path(tree, node).into_iter().map(|n| features(tree, n))));
            rep
        }
        ModelKind::BidirEmbeddings {
            dedicated_context_kernel,
        } => {
            let bu = p.kernel("bu");
            let context = p.kernel(if dedicated_context_kernel { "ctx" } else { "bu" });
            let mut rep = bottom_up(&bu, tree, node).0;
            let inputs = path(tree, node).into_iter().map(|n| bottom_up(&context, tree, n).0);
            rep.extend(run_lstm(&p.kernel("td"), inputs));
            rep
        }
    }
}

/// Head logits.
pub fn logits<R: Real>(p: &RefParams<R>, kind: ModelKind, tree: &Tree<Vec<f64>>, node: NodeRef) -> Vec<R> {
    affine(p.get("head.W"), &represent(p, kind, tree, node), Some(p.get("head.b")))
}

/// `-ln softmax(z)[label]` as `ln Σ exp(z_j - m) - (z_label - m)`.
pub fn nll<R: Real>(z: &[R], label: ClassLabel) -> R {
    let m = z.iter().copied().fold(z[0], |a, b| if b > a { b } else { a });
    let mut sum = R::zero();
    for &zj in z {
        sum = sum + (zj - m).exp();
    }
    sum.ln() - (z[label.index()] - m)
}

/// Mean loss over `(tree, target, label)` items.
pub fn batch_loss<R: Real>(p: &RefParams<R>, kind: ModelKind, items: &[(&Tree<Vec<f64>>, NodeRef, ClassLabel)]) -> R {
    let mut total = R::zero();
    for (tree, node, label) in items {
        total = total + nll(&logits(p, kind, tree, *node), *label);
    }
    total / R::from_f64(items.len() as f64)
}
