#![allow(dead_code)]

use domtree_core::lstm::LstmParams;
use domtree_core::{NodeRef, ParamSet, Tree};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn kernel(params: &mut ParamSet, prefix: &str, input_dim: usize, hidden: usize, seed: u64) -> LstmParams {
    LstmParams::register(params, prefix, input_dim, hidden, &mut rng(seed)).unwrap()
}

pub fn unit_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Path-shaped tree of `len` nodes, node `k` the only child of `k - 1`.
pub fn chain<R: Rng>(rng: &mut R, len: usize, dim: usize) -> Tree<Vec<f64>> {
    Tree::from_parents((0..len).map(|k| (k.checked_sub(1), unit_vec(rng, dim))).collect()).unwrap()
}

/// The same tree with every child list shuffled and nodes renumbered in
/// the resulting pre-order. Returns the copy and the old→new index map.
pub fn shuffle_children<T: Clone, R: Rng>(tree: &Tree<T>, rng: &mut R) -> (Tree<T>, Vec<usize>) {
    let mut new_of = vec![usize::MAX; tree.len()];
    let mut items = Vec::with_capacity(tree.len());
    let mut stack = vec![(0usize, None::<usize>)];
    while let Some((old, parent)) = stack.pop() {
        new_of[old] = items.len();
        items.push((parent, tree.payload(NodeRef(old)).clone()));
        let mut kids: Vec<usize> = tree.children(NodeRef(old)).map(|c| c.0).collect();
        kids.shuffle(rng);
        for c in kids.into_iter().rev() {
            stack.push((c, Some(new_of[old])));
        }
    }
    (Tree::from_parents(items).unwrap(), new_of)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
