//! Synthetic pages with planted targets whose class is recoverable only
//! from a chosen part of the tree.
//!
//! * `local`: the target's own font size encodes the class.
//! * `path-context`: every target is an identical leaf; the class sits in
//!   the visibility of its grandparent, which lies on the root path.
//! * `sibling-context`: as above, but the class sits in the font size of
//!   the parent's only sibling, off the root path and outside the subtree.
//!
//! In the two context tasks all targets of a page hang below the same
//! anchor node through structurally identical chains, so everything a
//! model can see apart from the class-bearing node is identical between
//! the targets of one page.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dom::{BBox, ClassLabel, DomNode, Page, UnknownName, Visibility};
use crate::tree::{NodeRef, Tree};

/// Tags used for every synthetic node.
pub const TAG_POOL: [&str; 10] = ["div", "span", "a", "p", "img", "li", "ul", "button", "h1", "section"];
/// Maximum number of children per node.
pub const MAX_BRANCHING: usize = 4;
/// Height of every class font-size band.
pub const BAND_WIDTH: f64 = 4.0;
/// Lower edge of the first class band; band `j` starts at
/// `BAND_START + j * BAND_STRIDE`.
pub const BAND_START: f64 = 8.0;
pub const BAND_STRIDE: f64 = 8.0;
/// Visibility values carried by class-bearing ancestors, in class order.
/// Background nodes are always visible.
pub const SIGNAL_VISIBILITY: [Visibility; 4] = [
    Visibility::Hidden,
    Visibility::Unset,
    Visibility::Collapse,
    Visibility::Initial,
];
/// Most classes a context task can carry (anchor branching limit).
pub const MAX_CONTEXT_CLASSES: usize = 4;

pub const DEFAULT_TARGETS_PER_CLASS: usize = 2;

/// Font-size range of background nodes, between the first two class bands.
pub const BACKGROUND_FONT_SIZE: (f64, f64) = (12.0, 16.0);

/// Every generated node carries the lightest permitted weight.
pub const BACKGROUND_FONT_WEIGHT: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SynthTask {
    Local,
    PathContext,
    SiblingContext,
}

impl SynthTask {
    pub const ALL: [SynthTask; 3] = [SynthTask::Local, SynthTask::PathContext, SynthTask::SiblingContext];

    pub fn name(self) -> &'static str {
        match self {
            SynthTask::Local => "local",
            SynthTask::PathContext => "path-context",
            SynthTask::SiblingContext => "sibling-context",
        }
    }

    /// Nodes planted per gadget: the anchor plus one chain per class.
    fn gadget_nodes(self, classes: usize) -> usize {
        match self {
            SynthTask::Local => 0,
            SynthTask::PathContext => 1 + 3 * classes,
            SynthTask::SiblingContext => 1 + 4 * classes,
        }
    }

    /// Smallest page able to hold `per_class` targets for each of
    /// `classes` classes.
    pub fn min_nodes(self, classes: usize, per_class: usize) -> usize {
        match self {
            SynthTask::Local => (classes * per_class).max(1),
            _ => 1 + per_class * self.gadget_nodes(classes),
        }
    }
}

impl fmt::Display for SynthTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthTask {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| UnknownName {
            kind: "synthetic task",
            value: s.into(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub task: SynthTask,
    pub pages: usize,
    /// Inclusive node-count range per page.
    pub nodes_min: usize,
    pub nodes_max: usize,
    pub classes: Vec<ClassLabel>,
    /// Planted targets of each class on every page.
    pub targets_per_class: usize,
    pub seed: u64,
    /// Pages are spread round-robin over this many regions.
    pub regions: usize,
}

impl SynthSpec {
    pub fn new(task: SynthTask, pages: usize, seed: u64) -> Self {
        Self {
            task,
            pages,
            nodes_min: 20,
            nodes_max: 60,
            classes: vec![ClassLabel::Name, ClassLabel::Price],
            targets_per_class: DEFAULT_TARGETS_PER_CLASS,
            seed,
            regions: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SynthError {
    #[error("at least one page is required")]
    NoPages,
    #[error("at least one class is required")]
    NoClasses,
    #[error("at least one target per class is required")]
    NoTargets,
    #[error("class {0} listed twice")]
    DuplicateClass(ClassLabel),
    #[error("{task} supports at most {max} classes")]
    TooManyClasses { task: SynthTask, max: usize },
    #[error("node range {min}..={max} is empty")]
    EmptyRange { min: usize, max: usize },
    #[error("{task} with {classes} classes and {per_class} target(s) per class needs at least {minimum} nodes per page")]
    TooFewNodes {
        task: SynthTask,
        classes: usize,
        per_class: usize,
        minimum: usize,
    },
    #[error("at least one region is required")]
    NoRegions,
}

/// A planted target and the node whose attributes carry its class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Planted {
    pub target: NodeRef,
    pub label: ClassLabel,
    pub signal: NodeRef,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthPage {
    pub page: Page,
    pub planted: Vec<Planted>,
}

/// Lower and upper edge of the font-size band for the class at `slot`.
pub fn class_band(slot: usize) -> (f64, f64) {
    let lo = BAND_START + slot as f64 * BAND_STRIDE;
    (lo, lo + BAND_WIDTH)
}

/// Generates `spec.pages` pages; deterministic in `spec`.
pub fn generate(spec: &SynthSpec) -> Result<Vec<SynthPage>, SynthError> {
    check(spec)?;
    Ok((0..spec.pages).map(|i| generate_page(spec, i)).collect())
}

fn check(spec: &SynthSpec) -> Result<(), SynthError> {
    if spec.pages == 0 {
        return Err(SynthError::NoPages);
    }
    if spec.regions == 0 {
        return Err(SynthError::NoRegions);
    }
    if spec.classes.is_empty() {
        return Err(SynthError::NoClasses);
    }
    if spec.targets_per_class == 0 {
        return Err(SynthError::NoTargets);
    }
    for (i, c) in spec.classes.iter().enumerate() {
        if spec.classes[..i].contains(c) {
            return Err(SynthError::DuplicateClass(*c));
        }
    }
    if spec.task != SynthTask::Local && spec.classes.len() > MAX_CONTEXT_CLASSES {
        return Err(SynthError::TooManyClasses {
            task: spec.task,
            max: MAX_CONTEXT_CLASSES,
        });
    }
    if spec.nodes_min > spec.nodes_max {
        return Err(SynthError::EmptyRange {
            min: spec.nodes_min,
            max: spec.nodes_max,
        });
    }
    let minimum = spec.task.min_nodes(spec.classes.len(), spec.targets_per_class);
    if spec.nodes_min < minimum {
        return Err(SynthError::TooFewNodes {
            task: spec.task,
            classes: spec.classes.len(),
            per_class: spec.targets_per_class,
            minimum,
        });
    }
    Ok(())
}

/// Tree under construction: children in insertion order, arbitrary ids.
struct Draft {
    nodes: Vec<DomNode>,
    children: Vec<Vec<usize>>,
}

impl Draft {
    fn add(&mut self, parent: Option<usize>, node: DomNode) -> usize {
        let id = self.nodes.len();
        self.nodes.push(node);
        self.children.push(Vec::new());
        if let Some(p) = parent {
            self.children[p].push(id);
        }
        id
    }

    /// Renumbers into depth-first pre-order and returns the old→new map.
    fn finish(self) -> (Tree<DomNode>, Vec<usize>) {
        let n = self.nodes.len();
        let mut new_of = vec![usize::MAX; n];
        let mut order = Vec::with_capacity(n);
        let mut stack = vec![(0usize, None::<usize>)];
        while let Some((old, parent)) = stack.pop() {
            new_of[old] = order.len();
            order.push((old, parent));
            for &c in self.children[old].iter().rev() {
                stack.push((c, Some(old)));
            }
        }
        let mut nodes: Vec<Option<DomNode>> = self.nodes.into_iter().map(Some).collect();
        let items = order
            .into_iter()
            .map(|(old, parent)| {
                (
                    parent.map(|p| new_of[p]),
                    nodes[old].take().expect("each node visited once"),
                )
            })
            .collect();
        let tree = Tree::from_parents(items).expect("generated tree is valid");
        (tree, new_of)
    }
}

fn background_node<R: Rng>(rng: &mut R) -> DomNode {
    DomNode {
        tag: String::from(TAG_POOL[rng.random_range(0..TAG_POOL.len())]),
        bbox: BBox {
            x: rng.random_range(0.0..1.0),
            y: rng.random_range(0.0..1.0),
            w: rng.random_range(0.0..1.0),
            h: rng.random_range(0.0..1.0),
        },
        num_bitmap_images: u32::from(rng.random_bool(0.1)),
        num_vector_images: u32::from(rng.random_bool(0.1)),
        font_size: rng.random_range(BACKGROUND_FONT_SIZE.0..BACKGROUND_FONT_SIZE.1),
        font_weight: BACKGROUND_FONT_WEIGHT,
        visibility: Visibility::Visible,
        is_active: rng.random_bool(0.1),
        label: None,
    }
}

/// Fixed, class-independent node used in the planted chains.
fn template(tag: &str, font_size: f64) -> DomNode {
    DomNode {
        tag: String::from(tag),
        bbox: BBox {
            x: 1.0,
            y: 2.0,
            w: 2.0,
            h: 1.0,
        },
        num_bitmap_images: 0,
        num_vector_images: 0,
        font_size,
        font_weight: BACKGROUND_FONT_WEIGHT,
        visibility: Visibility::Visible,
        is_active: false,
        label: None,
    }
}

fn band_value<R: Rng>(rng: &mut R, slot: usize) -> f64 {
    let (lo, hi) = class_band(slot);
    rng.random_range(lo..hi)
}

/// Random tree of `n` background nodes; each new node attaches uniformly
/// to an existing node with fewer than [`MAX_BRANCHING`] children.
fn background<R: Rng>(rng: &mut R, n: usize) -> Draft {
    let mut draft = Draft {
        nodes: Vec::with_capacity(n),
        children: Vec::with_capacity(n),
    };
    draft.add(None, background_node(rng));
    for _ in 1..n {
        let open: Vec<usize> = (0..draft.nodes.len())
            .filter(|&k| draft.children[k].len() < MAX_BRANCHING)
            .collect();
        let parent = open[rng.random_range(0..open.len())];
        let node = background_node(rng);
        draft.add(Some(parent), node);
    }
    draft
}

fn generate_page(spec: &SynthSpec, index: usize) -> SynthPage {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let k = spec.classes.len();
    let r = spec.targets_per_class;
    let total = rng.random_range(spec.nodes_min..=spec.nodes_max);
    let mut draft = background(&mut rng, total - r * spec.task.gadget_nodes(k));
    let background_len = draft.nodes.len();
    // (target, signal, slot) in draft ids.
    let mut plants: Vec<(usize, usize, usize)> = Vec::with_capacity(k * r);

    match spec.task {
        SynthTask::Local => {
            let mut ids: Vec<usize> = (0..background_len).collect();
            ids.shuffle(&mut rng);
            for (i, &t) in ids.iter().take(k * r).enumerate() {
                let slot = i % k;
                draft.nodes[t].font_size = band_value(&mut rng, slot);
                plants.push((t, t, slot));
            }
        }
        SynthTask::PathContext | SynthTask::SiblingContext => {
            for _ in 0..r {
                // A fresh anchor keeps every gadget's chains under one
                // shared, class-independent parent.
                let open: Vec<usize> = (0..background_len)
                    .filter(|&n| draft.children[n].len() < MAX_BRANCHING)
                    .collect();
                let at = open[rng.random_range(0..open.len())];
                let anchor = draft.add(Some(at), background_node(&mut rng));
                let mut slots: Vec<usize> = (0..k).collect();
                slots.shuffle(&mut rng);
                for slot in slots {
                    let mut grand = template("section", 12.0);
                    if spec.task == SynthTask::PathContext {
                        grand.visibility = SIGNAL_VISIBILITY[slot];
                    }
                    let g = draft.add(Some(anchor), grand);
                    let p = draft.add(Some(g), template("div", 12.0));
                    let signal = if spec.task == SynthTask::SiblingContext {
                        let mut sibling = template("p", 0.0);
                        sibling.font_size = band_value(&mut rng, slot);
                        draft.add(Some(g), sibling)
                    } else {
                        g
                    };
                    let t = draft.add(Some(p), template("span", 12.0));
                    plants.push((t, signal, slot));
                }
            }
        }
    }
    for &(t, _, slot) in &plants {
        draft.nodes[t].label = Some(spec.classes[slot]);
    }

    let (tree, new_of) = draft.finish();
    let mut planted: Vec<Planted> = plants
        .into_iter()
        .map(|(t, s, slot)| Planted {
            target: NodeRef(new_of[t]),
            label: spec.classes[slot],
            signal: NodeRef(new_of[s]),
        })
        .collect();
    planted.sort_by_key(|p| p.target);
    SynthPage {
        page: Page {
            id: format!("synth://{}/{}/{index:05}", spec.task, spec.seed),
            region: format!("region-{}", index % spec.regions),
            tree,
        },
        planted,
    }
}
