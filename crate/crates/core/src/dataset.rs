//! Turning labeled pages into classification examples: subject-node
//! augmentation, negative subsampling and stratified page splits.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dom::{ClassLabel, Page, UnknownName};
use crate::features::Featurizer;
use crate::tree::{NodeRef, Tree};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DatasetError {
    #[error("page {page:?} has no node labeled {label}; subject node cannot be placed")]
    MissingLabel { page: String, label: ClassLabel },
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
}

/// One subtree of interest: the target node of a page and its class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabeledExample {
    /// Index into the owning dataset's page list.
    pub page: usize,
    pub target: NodeRef,
    pub label: ClassLabel,
}

/// Labels stored on the page's nodes, in node order.
pub fn page_labels(page: &Page) -> Vec<(NodeRef, ClassLabel)> {
    page.tree
        .payloads()
        .enumerate()
        .filter_map(|(k, n)| n.label.map(|l| (NodeRef(k), l)))
        .collect()
}

/// Adds the subject node: the lowest common ancestor of every node labeled
/// name, price or main picture. Returns the page's labels plus that entry.
///
/// The subject node may coincide with one of the labeled nodes, in which
/// case that node contributes two examples.
pub fn augment_subject_node(page: &Page) -> Result<Vec<(NodeRef, ClassLabel)>, DatasetError> {
    let mut anchors = Vec::new();
    for label in [ClassLabel::Name, ClassLabel::Price, ClassLabel::MainPicture] {
        let before = anchors.len();
        anchors.extend(page.labeled(label));
        if anchors.len() == before {
            return Err(DatasetError::MissingLabel {
                page: page.id.clone(),
                label,
            });
        }
    }
    let subject = page
        .tree
        .lca(&anchors)
        .expect("anchors are nonempty and in range");
    let mut labels: Vec<_> = page_labels(page)
        .into_iter()
        .filter(|(_, l)| *l != ClassLabel::SubjectNode)
        .collect();
    labels.push((subject, ClassLabel::SubjectNode));
    Ok(labels)
}

/// Result of drawing negatives from a page.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NegativeSample {
    /// Chosen nodes in ascending index order.
    pub nodes: Vec<NodeRef>,
    /// How many fewer than requested were available.
    pub shortfall: usize,
}

/// Draws `k` distinct nodes uniformly from those not listed in `labeled`.
/// Deterministic in `(tree, labeled, k, seed)`.
pub fn sample_negatives<T>(tree: &Tree<T>, labeled: &[NodeRef], k: usize, seed: u64) -> NegativeSample {
    let candidates: Vec<NodeRef> = (0..tree.len())
        .map(NodeRef)
        .filter(|n| !labeled.contains(n))
        .collect();
    let take = k.min(candidates.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes: Vec<NodeRef> = rand::seq::index::sample(&mut rng, candidates.len(), take)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    nodes.sort_unstable();
    NegativeSample {
        nodes,
        shortfall: k - take,
    }
}

/// How pages become examples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IngestConfig {
    /// Negatives drawn per page.
    pub negatives_per_page: usize,
    /// Add the subject-node example; pages lacking its anchors are skipped.
    pub subject_node: bool,
    pub seed: u64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            negatives_per_page: 1,
            subject_node: true,
            seed: 0,
        }
    }
}

/// A page that could not be fully ingested.
#[derive(Clone, Debug, PartialEq)]
pub enum IngestIssue {
    Skipped { page: String, reason: DatasetError },
    NegativeShortfall { page: String, missing: usize },
}

impl fmt::Display for IngestIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IngestIssue::Skipped { page, reason } => write!(f, "skipped {page}: {reason}"),
            IngestIssue::NegativeShortfall { page, missing } => {
                write!(f, "{page}: {missing} negative(s) short")
            }
        }
    }
}

/// Featurised pages and the examples drawn from them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub page_ids: Vec<String>,
    pub pages: Vec<Tree<Vec<f64>>>,
    pub examples: Vec<LabeledExample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Builds examples from `pages`. Positives come from node labels (plus
    /// the subject node when configured); negatives are sampled per page
    /// with a seed derived from the run seed and the page id.
    pub fn ingest<'a>(
        pages: impl IntoIterator<Item = &'a Page>,
        featurizer: &Featurizer,
        config: &IngestConfig,
    ) -> (Self, Vec<IngestIssue>) {
        let mut data = Dataset::default();
        let mut issues = Vec::new();
        for page in pages {
            let labels = if config.subject_node {
                match augment_subject_node(page) {
                    Ok(l) => l,
                    Err(reason) => {
                        issues.push(IngestIssue::Skipped {
                            page: page.id.clone(),
                            reason,
                        });
                        continue;
                    }
                }
            } else {
                page_labels(page)
            };
            let positives: Vec<NodeRef> = labels.iter().map(|(n, _)| *n).collect();
            let negatives = sample_negatives(
                &page.tree,
                &positives,
                config.negatives_per_page,
                page_seed(config.seed, &page.id),
            );
            if negatives.shortfall > 0 {
                issues.push(IngestIssue::NegativeShortfall {
                    page: page.id.clone(),
                    missing: negatives.shortfall,
                });
            }
            let index = data.pages.len();
            data.page_ids.push(page.id.clone());
            data.pages.push(featurizer.tree(&page.tree));
            data.examples.extend(labels.into_iter().map(|(target, label)| LabeledExample {
                page: index,
                target,
                label,
            }));
            data.examples
                .extend(negatives.nodes.into_iter().map(|target| LabeledExample {
                    page: index,
                    target,
                    label: ClassLabel::Negative,
                }));
        }
        (data, issues)
    }
}

/// FNV-1a of the page id mixed with the run seed.
pub fn page_seed(seed: u64, page_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in page_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ seed.rotate_left(17)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| UnknownName {
            kind: "split",
            value: s.into(),
        })
    }
}

/// Train / validation / test fractions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios(pub [f64; 3]);

impl Default for SplitRatios {
    fn default() -> Self {
        Self([0.64, 0.20, 0.16])
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let r = self.0;
        let ok = r.iter().all(|v| v.is_finite() && *v >= 0.0) && (r.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        if ok {
            Ok(())
        } else {
            Err(DatasetError::BadRatios(r))
        }
    }

    /// Largest-remainder apportionment of `n` items; ties go to the
    /// earlier split.
    pub fn apportion(&self, n: usize) -> [usize; 3] {
        let quotas = self.0.map(|r| r * n as f64);
        let mut counts = quotas.map(|q| libm::floor(q) as usize);
        let mut left = n - counts.iter().sum::<usize>();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - counts[a] as f64;
            let fb = quotas[b] - counts[b] as f64;
            fb.partial_cmp(&fa).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        counts
    }
}

/// Assigns every page to a split, stratified by region. Pages are shuffled
/// within each region under `seed` and cut by [`SplitRatios::apportion`].
/// Returns one split per input page, in input order.
pub fn split_dataset(
    pages: &[(String, String)],
    ratios: SplitRatios,
    seed: u64,
) -> Result<Vec<Split>, DatasetError> {
    ratios.validate()?;
    let mut by_region: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, (_, region)) in pages.iter().enumerate() {
        by_region.entry(region.as_str()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = alloc::vec![Split::Train; pages.len()];
    for (_, mut members) in by_region {
        members.sort_by(|&a, &b| pages[a].0.cmp(&pages[b].0).then(a.cmp(&b)));
        members.shuffle(&mut rng);
        let counts = ratios.apportion(members.len());
        let mut it = members.into_iter();
        for (split, count) in Split::ALL.into_iter().zip(counts) {
            for i in it.by_ref().take(count) {
                out[i] = split;
            }
        }
    }
    Ok(out)
}
