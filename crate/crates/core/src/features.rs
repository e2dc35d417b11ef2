//! Fixed-width numeric encoding of a node's local attributes.
//!
//! Layout of the 70 slots:
//!
//! | slot   | content                                   |
//! |--------|-------------------------------------------|
//! | 0, 1   | bbox top-left x, y                        |
//! | 2, 3   | bbox width, height                        |
//! | 4, 5   | bitmap / vector image counts              |
//! | 6, 7   | font size, font weight                    |
//! | 8      | visibility index (hidden = 0 … unset = 5) |
//! | 9      | active flag                               |
//! | 10..69 | tag one-hot, slot 69 is `UNK`             |

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dom::{DomNode, Page};
use crate::tree::Tree;

pub const FEATURE_DIM: usize = 70;
pub const SCALAR_SLOTS: usize = 10;
/// Number of named tags; the one-hot has one more slot for `UNK`.
pub const VOCAB_CAPACITY: usize = 59;
pub const TAG_OFFSET: usize = SCALAR_SLOTS;
pub const UNK_SLOT: usize = FEATURE_DIM - 1;

pub const SLOT_NAMES: [&str; SCALAR_SLOTS] = [
    "top_left_x",
    "top_left_y",
    "width",
    "height",
    "num_bitmap_images",
    "num_vector_images",
    "font_size",
    "font_weight",
    "visibility",
    "is_active",
];

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("tag vocabulary holds {0} tags, at most 59 allowed")]
    VocabularyTooLarge(usize),
    #[error("tag vocabulary entry {0:?} is duplicated")]
    DuplicateTag(String),
    #[error("tag vocabulary entry {0:?} is empty or not lower-case")]
    BadTag(String),
    #[error("mask slot {0} is not a scalar slot (0..10)")]
    BadMaskSlot(usize),
    #[error("scaling for slot {slot} has non-positive or non-finite spread {std}")]
    BadScaling { slot: usize, std: f64 },
}

/// The most frequent tags of a training corpus. Index `i` maps to slot
/// `10 + i`; unknown tags map to [`UNK_SLOT`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TagVocabulary {
    tags: Vec<String>,
}

impl TagVocabulary {
    pub fn from_tags(tags: Vec<String>) -> Result<Self, FeatureError> {
        if tags.len() > VOCAB_CAPACITY {
            return Err(FeatureError::VocabularyTooLarge(tags.len()));
        }
        for (i, t) in tags.iter().enumerate() {
            if t.is_empty() || t.chars().any(|c| c.is_uppercase() || c.is_whitespace()) {
                return Err(FeatureError::BadTag(t.clone()));
            }
            if tags[..i].contains(t) {
                return Err(FeatureError::DuplicateTag(t.clone()));
            }
        }
        Ok(Self { tags })
    }

    /// Counts tags over every node of `pages` and keeps the 59 most
    /// frequent, ties broken lexicographically.
    pub fn build<'a>(pages: impl IntoIterator<Item = &'a Page>) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for page in pages {
            for node in page.tree.payloads() {
                *counts.entry(node.tag.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Self {
            tags: ranked
                .into_iter()
                .take(VOCAB_CAPACITY)
                .map(|(t, _)| String::from(t))
                .collect(),
        }
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// One-hot position in `0..=59`; 59 is `UNK`.
    pub fn index_of(&self, tag: &str) -> usize {
        self.tags
            .iter()
            .position(|t| t == tag)
            .unwrap_or(VOCAB_CAPACITY)
    }
}

/// Scalar slots removed from the feature vector.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FeatureMask {
    removed: Vec<usize>,
}

impl FeatureMask {
    pub fn none() -> Self {
        Self::default()
    }

    /// Drops the four bounding-box scalars.
    pub fn bbox() -> Self {
        Self {
            removed: vec![0, 1, 2, 3],
        }
    }

    pub fn from_slots(mut slots: Vec<usize>) -> Result<Self, FeatureError> {
        if let Some(&bad) = slots.iter().find(|&&s| s >= SCALAR_SLOTS) {
            return Err(FeatureError::BadMaskSlot(bad));
        }
        slots.sort_unstable();
        slots.dedup();
        Ok(Self { removed: slots })
    }

    pub fn removed(&self) -> &[usize] {
        &self.removed
    }

    pub fn is_empty(&self) -> bool {
        self.removed.is_empty()
    }

    /// Width of a masked feature vector.
    pub fn output_dim(&self) -> usize {
        FEATURE_DIM - self.removed.len()
    }
}

/// Raw 70-slot encoding of one node, before masking.
pub fn raw_features(node: &DomNode, vocab: &TagVocabulary) -> [f64; FEATURE_DIM] {
    let mut v = [0.0; FEATURE_DIM];
    v[0] = node.bbox.x;
    v[1] = node.bbox.y;
    v[2] = node.bbox.w;
    v[3] = node.bbox.h;
    v[4] = f64::from(node.num_bitmap_images);
    v[5] = f64::from(node.num_vector_images);
    v[6] = node.font_size;
    v[7] = node.font_weight;
    v[8] = node.visibility.index() as f64;
    v[9] = if node.is_active { 1.0 } else { 0.0 };
    v[TAG_OFFSET + vocab.index_of(&node.tag)] = 1.0;
    v
}

/// Feature vector of `node` with the masked slots removed.
pub fn featurize(node: &DomNode, vocab: &TagVocabulary, mask: &FeatureMask) -> Vec<f64> {
    let raw = raw_features(node, vocab);
    apply_mask(&raw, mask)
}

fn apply_mask(raw: &[f64; FEATURE_DIM], mask: &FeatureMask) -> Vec<f64> {
    raw.iter()
        .enumerate()
        .filter(|(i, _)| !mask.removed.contains(i))
        .map(|(_, v)| *v)
        .collect()
}

/// Optional per-slot standardisation of the ten scalar slots, fitted on
/// training pages. Off unless explicitly requested.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureScaling {
    pub mean: [f64; SCALAR_SLOTS],
    pub std: [f64; SCALAR_SLOTS],
}

impl FeatureScaling {
    pub fn new(mean: [f64; SCALAR_SLOTS], std: [f64; SCALAR_SLOTS]) -> Result<Self, FeatureError> {
        for (slot, &s) in std.iter().enumerate() {
            if !(s.is_finite() && s > 0.0) || !mean[slot].is_finite() {
                return Err(FeatureError::BadScaling { slot, std: s });
            }
        }
        Ok(Self { mean, std })
    }

    /// Mean and standard deviation over every node; constant slots get a
    /// spread of 1 so they map to zero.
    pub fn fit<'a>(pages: impl IntoIterator<Item = &'a Page>, vocab: &TagVocabulary) -> Self {
        let mut n = 0usize;
        let mut sum = [0.0; SCALAR_SLOTS];
        let mut sum_sq = [0.0; SCALAR_SLOTS];
        for page in pages {
            for node in page.tree.payloads() {
                let raw = raw_features(node, vocab);
                for s in 0..SCALAR_SLOTS {
                    sum[s] += raw[s];
                    sum_sq[s] += raw[s] * raw[s];
                }
                n += 1;
            }
        }
        let mut mean = [0.0; SCALAR_SLOTS];
        let mut std = [1.0; SCALAR_SLOTS];
        if n > 0 {
            for s in 0..SCALAR_SLOTS {
                mean[s] = sum[s] / n as f64;
                let var = (sum_sq[s] / n as f64 - mean[s] * mean[s]).max(0.0);
                let sd = libm::sqrt(var);
                std[s] = if sd > 1e-12 { sd } else { 1.0 };
            }
        }
        Self { mean, std }
    }
}

/// Everything needed to turn a page into model inputs; frozen into
/// checkpoints so inference reproduces training-time features.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Featurizer {
    pub vocab: TagVocabulary,
    pub mask: FeatureMask,
    pub scaling: Option<FeatureScaling>,
}

impl Featurizer {
    pub fn new(vocab: TagVocabulary, mask: FeatureMask) -> Self {
        Self {
            vocab,
            mask,
            scaling: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.mask.output_dim()
    }

    pub fn node(&self, node: &DomNode) -> Vec<f64> {
        let mut raw = raw_features(node, &self.vocab);
        if let Some(scaling) = &self.scaling {
            for (s, v) in raw[..SCALAR_SLOTS].iter_mut().enumerate() {
                *v = (*v - scaling.mean[s]) / scaling.std[s];
            }
        }
        apply_mask(&raw, &self.mask)
    }

    pub fn tree(&self, tree: &Tree<DomNode>) -> Tree<Vec<f64>> {
        tree.map(|_, n| self.node(n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::Visibility;

    fn vocab(tags: &[&str]) -> TagVocabulary {
        TagVocabulary::from_tags(tags.iter().map(|t| String::from(*t)).collect()).unwrap()
    }

    #[test]
    fn layout_of_plain_div() {
        let mut node = DomNode::new("div");
        node.font_size = 0.0;
        node.font_weight = 100.0;
        let v = featurize(&node, &vocab(&["div"]), &FeatureMask::none());
        assert_eq!(v.len(), 70);
        assert_eq!(v[8], 1.0);
        assert_eq!(v[10], 1.0);
        assert_eq!(v[11..].iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn unknown_tag_goes_to_unk() {
        let v = featurize(&DomNode::new("blink"), &vocab(&["div"]), &FeatureMask::none());
        assert_eq!(v[UNK_SLOT], 1.0);
        assert_eq!(v[TAG_OFFSET..].iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn bbox_mask_drops_four_slots() {
        let mut node = DomNode::new("a");
        node.bbox.x = 3.0;
        node.font_size = 12.0;
        node.visibility = Visibility::Collapse;
        let v = featurize(&node, &vocab(&["a"]), &FeatureMask::bbox());
        assert_eq!(v.len(), 66);
        assert_eq!(v[2], 12.0);
        assert_eq!(v[4], 2.0);
        assert_eq!(v[6], 1.0);
    }

    #[test]
    fn vocabulary_validation() {
        assert!(TagVocabulary::from_tags(vec!["div".into(), "div".into()]).is_err());
        assert!(TagVocabulary::from_tags(vec!["DIV".into()]).is_err());
        let many = (0..60).map(|i| alloc::format!("t{i}")).collect();
        assert!(matches!(
            TagVocabulary::from_tags(many),
            Err(FeatureError::VocabularyTooLarge(60))
        ));
    }

    #[test]
    fn scaling_standardises_scalars_only() {
        let mut f = Featurizer::new(vocab(&["p"]), FeatureMask::none());
        let mut mean = [0.0; SCALAR_SLOTS];
        mean[6] = 10.0;
        let mut std = [1.0; SCALAR_SLOTS];
        std[6] = 2.0;
        f.scaling = Some(FeatureScaling::new(mean, std).unwrap());
        let mut node = DomNode::new("p");
        node.font_size = 14.0;
        let v = f.node(&node);
        assert_eq!(v[6], 2.0);
        assert_eq!(v[10], 1.0);
    }
}
