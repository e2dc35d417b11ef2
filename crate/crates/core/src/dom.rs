//! Rendered DOM node attributes, class labels and pages.

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use crate::tree::{NodeRef, Tree};

/// Number of output classes.
pub const NUM_CLASSES: usize = 7;

/// Target classes in their fixed output-unit order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassLabel {
    Negative = 0,
    Name = 1,
    Cart = 2,
    Price = 3,
    AddToCart = 4,
    MainPicture = 5,
    SubjectNode = 6,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; NUM_CLASSES] = [
        ClassLabel::Negative,
        ClassLabel::Name,
        ClassLabel::Cart,
        ClassLabel::Price,
        ClassLabel::AddToCart,
        ClassLabel::MainPicture,
        ClassLabel::SubjectNode,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Negative => "negative",
            ClassLabel::Name => "name",
            ClassLabel::Cart => "cart",
            ClassLabel::Price => "price",
            ClassLabel::AddToCart => "addtocart",
            ClassLabel::MainPicture => "mainpicture",
            ClassLabel::SubjectNode => "subjectnode",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} {value:?}")]
pub struct UnknownName {
    pub kind: &'static str,
    pub value: String,
}

impl FromStr for ClassLabel {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| UnknownName {
            kind: "class label",
            value: s.into(),
        })
    }
}

/// CSS `visibility` values; the discriminant is the feature value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Visibility {
    Hidden = 0,
    Visible = 1,
    Collapse = 2,
    Inherit = 3,
    Initial = 4,
    Unset = 5,
}

impl Visibility {
    pub const ALL: [Visibility; 6] = [
        Visibility::Hidden,
        Visibility::Visible,
        Visibility::Collapse,
        Visibility::Inherit,
        Visibility::Initial,
        Visibility::Unset,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Visibility::Hidden => "hidden",
            Visibility::Visible => "visible",
            Visibility::Collapse => "collapse",
            Visibility::Inherit => "inherit",
            Visibility::Initial => "initial",
            Visibility::Unset => "unset",
        }
    }
}

impl FromStr for Visibility {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| UnknownName {
            kind: "visibility",
            value: s.into(),
        })
    }
}

/// Bounding box in CSS pixels, top-left corner plus extent.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// One rendered element.
#[derive(Clone, Debug, PartialEq)]
pub struct DomNode {
    /// Lower-case tag name.
    pub tag: String,
    pub bbox: BBox,
    pub num_bitmap_images: u32,
    pub num_vector_images: u32,
    pub font_size: f64,
    /// Numeric CSS weight, 100 to 900.
    pub font_weight: f64,
    pub visibility: Visibility,
    pub is_active: bool,
    pub label: Option<ClassLabel>,
}

impl DomNode {
    /// A visible, inactive, unlabeled node with zero geometry.
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            bbox: BBox::default(),
            num_bitmap_images: 0,
            num_vector_images: 0,
            font_size: 16.0,
            font_weight: 400.0,
            visibility: Visibility::Visible,
            is_active: false,
            label: None,
        }
    }

    /// Checks the field constraints, naming the first offending field.
    pub fn check(&self) -> Result<(), &'static str> {
        let b = &self.bbox;
        if ![b.x, b.y, b.w, b.h, self.font_size, self.font_weight]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err("non-finite numeric field");
        }
        if b.w < 0.0 {
            return Err("bbox.w");
        }
        if b.h < 0.0 {
            return Err("bbox.h");
        }
        if !(100.0..=900.0).contains(&self.font_weight) {
            return Err("font_weight");
        }
        if self.font_size < 0.0 {
            return Err("font_size");
        }
        if self.tag.is_empty() || self.tag.chars().any(|c| c.is_uppercase()) {
            return Err("tag");
        }
        Ok(())
    }
}

/// A parsed page: identity, stratification region and DOM tree.
#[derive(Clone, Debug, PartialEq)]
pub struct Page {
    /// Page identity; the snapshot URL.
    pub id: String,
    pub region: String,
    pub tree: Tree<DomNode>,
}

impl Page {
    /// Nodes carrying `label`, in index order.
    pub fn labeled(&self, label: ClassLabel) -> impl Iterator<Item = NodeRef> + '_ {
        self.tree
            .payloads()
            .enumerate()
            .filter(move |(_, n)| n.label == Some(label))
            .map(|(k, _)| NodeRef(k))
    }

    pub fn labeled_count(&self) -> usize {
        self.tree.payloads().filter(|n| n.label.is_some()).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_order_is_fixed() {
        let names: alloc::vec::Vec<_> = ClassLabel::ALL.iter().map(|c| c.name()).collect();
        assert_eq!(
            names,
            ["negative", "name", "cart", "price", "addtocart", "mainpicture", "subjectnode"]
        );
        for (i, c) in ClassLabel::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(c.name().parse::<ClassLabel>().unwrap(), *c);
        }
        assert!("banner".parse::<ClassLabel>().is_err());
    }

    #[test]
    fn visibility_indices() {
        assert_eq!("hidden".parse::<Visibility>().unwrap().index(), 0);
        assert_eq!("unset".parse::<Visibility>().unwrap().index(), 5);
        assert!("gone".parse::<Visibility>().is_err());
    }

    #[test]
    fn node_check() {
        let mut n = DomNode::new("div");
        assert!(n.check().is_ok());
        n.bbox.w = -1.0;
        assert_eq!(n.check(), Err("bbox.w"));
        n.bbox.w = 1.0;
        n.font_weight = 950.0;
        assert_eq!(n.check(), Err("font_weight"));
    }
}
