//! Page snapshot files: UTF-8 JSON, schema version 1.
//!
//! ```json
//! { "version": 1, "url": "...", "region": "...",
//!   "nodes": [ { "id": 0, "parent": -1, "tag": "html",
//!                "bbox": {"x": 0, "y": 0, "w": 1280, "h": 900},
//!                "num_bitmap_images": 0, "num_vector_images": 0,
//!                "font_size": 16, "font_weight": 400,
//!                "visibility": "visible", "is_active": false,
//!                "label": "price" } ] }
//! ```
//!
//! Nodes are stored in pre-order: `id` equals the array position and every
//! `parent` is smaller than the node's own id. Children are the nodes naming
//! a parent, in ascending id order. `label` is optional.

use std::path::Path;

use domtree_core::dom::{BBox, ClassLabel, DomNode, Page, Visibility};
use domtree_core::tree::{Tree, TreeDefect, TreeError};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("malformed snapshot at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    /// A document-level field is missing or has the wrong type.
    #[error("invalid snapshot at line {line}, column {column}: {message}")]
    Structure {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("snapshot has no nodes")]
    Empty,
    #[error("node {node}: field `{field}`: {reason}")]
    Field {
        node: usize,
        field: &'static str,
        reason: String,
    },
    #[error("invalid tree: {0}")]
    Tree(#[from] TreeError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotDoc {
    version: u32,
    url: String,
    region: String,
    nodes: Vec<NodeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: i64,
    parent: i64,
    tag: String,
    bbox: BBoxDoc,
    num_bitmap_images: i64,
    num_vector_images: i64,
    font_size: f64,
    font_weight: f64,
    visibility: String,
    is_active: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BBoxDoc {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

fn field(node: usize, field: &'static str, reason: impl Into<String>) -> SnapshotError {
    SnapshotError::Field {
        node,
        field,
        reason: reason.into(),
    }
}

fn count(node: usize, name: &'static str, value: i64) -> Result<u32, SnapshotError> {
    u32::try_from(value).map_err(|_| field(node, name, format!("{value} is not a non-negative count")))
}

fn convert_node(index: usize, doc: NodeDoc) -> Result<(Option<usize>, DomNode), SnapshotError> {
    if doc.id != index as i64 {
        return Err(field(index, "id", format!("{} does not match array position {index}", doc.id)));
    }
    let parent = match doc.parent {
        -1 if index == 0 => None,
        -1 => return Err(field(index, "parent", "only the first node may be the root")),
        p if p < 0 || p >= doc.id => {
            return Err(field(index, "parent", format!("{p} must lie in 0..{index}")))
        }
        p => Some(p as usize),
    };
    if index == 0 && parent.is_some() {
        return Err(field(0, "parent", "the first node must be the root (-1)"));
    }
    let visibility: Visibility = doc
        .visibility
        .parse()
        .map_err(|e: domtree_core::dom::UnknownName| field(index, "visibility", e.to_string()))?;
    let label = doc
        .label
        .map(|l| l.parse::<ClassLabel>())
        .transpose()
        .map_err(|e| field(index, "label", e.to_string()))?;
    let node = DomNode {
        tag: doc.tag,
        bbox: BBox {
            x: doc.bbox.x,
            y: doc.bbox.y,
            w: doc.bbox.w,
            h: doc.bbox.h,
        },
        num_bitmap_images: count(index, "num_bitmap_images", doc.num_bitmap_images)?,
        num_vector_images: count(index, "num_vector_images", doc.num_vector_images)?,
        font_size: doc.font_size,
        font_weight: doc.font_weight,
        visibility,
        is_active: doc.is_active,
        label,
    };
    node.check().map_err(|name| {
        let name: &'static str = match name {
            "bbox.w" | "bbox.h" => "bbox",
            other => other,
        };
        field(index, name, "value out of range")
    })?;
    Ok((parent, node))
}

/// Parses snapshot text into a page whose id is the snapshot URL.
pub fn parse_snapshot(text: &str) -> Result<Page, SnapshotError> {
    let doc: SnapshotDoc = serde_json::from_str(text).map_err(|e| {
        let (line, column, message) = (e.line(), e.column(), e.to_string());
        if e.is_data() {
            SnapshotError::Structure { line, column, message }
        } else {
            SnapshotError::Syntax { line, column, message }
        }
    })?;
    if doc.version != SCHEMA_VERSION {
        return Err(SnapshotError::Version(doc.version));
    }
    if doc.nodes.is_empty() {
        return Err(SnapshotError::Empty);
    }
    let items = doc
        .nodes
        .into_iter()
        .enumerate()
        .map(|(i, n)| convert_node(i, n))
        .collect::<Result<Vec<_>, _>>()?;
    let tree = Tree::from_parents(items)?;
    debug_assert_eq!(tree.validate(), Vec::<TreeDefect>::new());
    Ok(Page {
        id: doc.url,
        region: doc.region,
        tree,
    })
}

/// Serialises a page; `parse_snapshot` inverts this field for field.
pub fn serialize_snapshot(page: &Page) -> String {
    let nodes = page
        .tree
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let p = &n.payload;
            NodeDoc {
                id: i as i64,
                parent: n.parent.map_or(-1, |p| p as i64),
                tag: p.tag.clone(),
                bbox: BBoxDoc {
                    x: p.bbox.x,
                    y: p.bbox.y,
                    w: p.bbox.w,
                    h: p.bbox.h,
                },
                num_bitmap_images: p.num_bitmap_images.into(),
                num_vector_images: p.num_vector_images.into(),
                font_size: p.font_size,
                font_weight: p.font_weight,
                visibility: p.visibility.name().to_owned(),
                is_active: p.is_active,
                label: p.label.map(|l| l.name().to_owned()),
            }
        })
        .collect();
    let doc = SnapshotDoc {
        version: SCHEMA_VERSION,
        url: page.id.clone(),
        region: page.region.clone(),
        nodes,
    };
    serde_json::to_string_pretty(&doc).expect("snapshot documents always serialise")
}

pub fn read_snapshot(path: &Path) -> Result<Page, SnapshotError> {
    let text = std::fs::read_to_string(path).map_err(|source| SnapshotError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_snapshot(&text)
}

pub fn write_snapshot(path: &Path, page: &Page) -> Result<(), SnapshotError> {
    std::fs::write(path, serialize_snapshot(page) + "\n").map_err(|source| SnapshotError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_NODE: &str = r#"{"version":1,"url":"u","region":"se","nodes":[
        {"id":0,"parent":-1,"tag":"html","bbox":{"x":0,"y":0,"w":10,"h":5},
         "num_bitmap_images":0,"num_vector_images":0,"font_size":16,"font_weight":400,
         "visibility":"visible","is_active":false}]}"#;

    #[test]
    fn minimal_snapshot() {
        let page = parse_snapshot(ONE_NODE).unwrap();
        assert_eq!(page.tree.len(), 1);
        assert_eq!(page.tree.payload(page.tree.root()).tag, "html");
        assert_eq!((page.id.as_str(), page.region.as_str()), ("u", "se"));
    }

    #[test]
    fn syntax_errors_report_position() {
        match parse_snapshot("{\"version\": 1,\n  \"url\": }").unwrap_err() {
            SnapshotError::Syntax { line, column, .. } => assert_eq!((line, column), (2, 10)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_visibility_names_field() {
        let text = ONE_NODE.replace("\"visible\"", "\"faded\"");
        match parse_snapshot(&text).unwrap_err() {
            SnapshotError::Field { node, field, .. } => assert_eq!((node, field), (0, "visibility")),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn bad_label_and_counts_name_fields() {
        let text = ONE_NODE.replace("\"is_active\":false", "\"is_active\":false,\"label\":\"title\"");
        assert!(matches!(
            parse_snapshot(&text).unwrap_err(),
            SnapshotError::Field { field: "label", .. }
        ));
        let text = ONE_NODE.replace("\"num_bitmap_images\":0", "\"num_bitmap_images\":-2");
        assert!(matches!(
            parse_snapshot(&text).unwrap_err(),
            SnapshotError::Field {
                field: "num_bitmap_images",
                ..
            }
        ));
    }

    #[test]
    fn version_checked() {
        let text = ONE_NODE.replace("\"version\":1", "\"version\":2");
        assert!(matches!(parse_snapshot(&text).unwrap_err(), SnapshotError::Version(2)));
    }
}
