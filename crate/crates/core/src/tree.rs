//! Rooted, ordered trees stored in parent-before-child index order.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Index of a node in its tree's node table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef(pub usize);

impl NodeRef {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode<T> {
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub payload: T,
}

/// A structural invariant violation reported by [`Tree::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TreeDefect {
    Empty,
    /// Root is not stored at index 0.
    RootNotFirst { root: usize },
    MultipleRoots { roots: Vec<usize> },
    /// Parent index is not smaller than the node's own index.
    OrderViolation { node: usize, parent: usize },
    ParentOutOfRange { node: usize, parent: usize },
    /// A child list and the parent pointers disagree.
    ChildListMismatch { node: usize, child: usize },
    /// Children of a node are not listed in ascending index order.
    ChildOrder { node: usize },
}

impl fmt::Display for TreeDefect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeDefect::Empty => write!(f, "tree has no nodes"),
            TreeDefect::RootNotFirst { root } => write!(f, "root stored at index {root}, expected 0"),
            TreeDefect::MultipleRoots { roots } => write!(f, "multiple roots: {roots:?}"),
            TreeDefect::OrderViolation { node, parent } => {
                write!(f, "order violation: node {node} has parent {parent}")
            }
            TreeDefect::ParentOutOfRange { node, parent } => {
                write!(f, "node {node} has out-of-range parent {parent}")
            }
            TreeDefect::ChildListMismatch { node, child } => {
                write!(f, "child list of node {node} disagrees with parent of {child}")
            }
            TreeDefect::ChildOrder { node } => write!(f, "children of node {node} out of order"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum TreeError {
    #[error("invalid tree: {}", join_defects(.0))]
    Invalid(Vec<TreeDefect>),
    #[error("node index {index} out of range (tree has {len} nodes)")]
    NodeOutOfRange { index: usize, len: usize },
    #[error("lowest common ancestor of an empty set")]
    EmptySet,
}

fn join_defects(defects: &[TreeDefect]) -> alloc::string::String {
    use core::fmt::Write;
    let mut s = alloc::string::String::new();
    for (i, d) in defects.iter().enumerate() {
        if i > 0 {
            s.push_str("; ");
        }
        let _ = write!(s, "{d}");
    }
    s
}

/// Immutable rooted tree. Node 0 is the root and every parent index is
/// smaller than its child's, so a reverse index sweep visits children
/// before parents.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree<T> {
    nodes: Vec<TreeNode<T>>,
}

impl<T> Tree<T> {
    /// Builds a tree from `(parent, payload)` pairs in storage order.
    /// Children are ordered by ascending index.
    pub fn from_parents(items: Vec<(Option<usize>, T)>) -> Result<Self, TreeError> {
        let n = items.len();
        let mut nodes: Vec<TreeNode<T>> = items
            .into_iter()
            .map(|(parent, payload)| TreeNode {
                parent,
                children: Vec::new(),
                payload,
            })
            .collect();
        for k in 0..n {
            if let Some(p) = nodes[k].parent {
                if p < n && p != k {
                    nodes[p].children.push(k);
                }
            }
        }
        let tree = Self { nodes };
        let defects = tree.validate();
        if defects.is_empty() {
            Ok(tree)
        } else {
            Err(TreeError::Invalid(defects))
        }
    }

    /// Wraps raw records without checking them; see [`Tree::validate`].
    pub fn from_nodes_unchecked(nodes: Vec<TreeNode<T>>) -> Self {
        Self { nodes }
    }

    /// Lists every structural defect; an empty list means the tree is valid.
    pub fn validate(&self) -> Vec<TreeDefect> {
        let mut defects = Vec::new();
        if self.nodes.is_empty() {
            defects.push(TreeDefect::Empty);
            return defects;
        }
        let n = self.nodes.len();
        let roots: Vec<usize> = (0..n).filter(|&k| self.nodes[k].parent.is_none()).collect();
        if roots.len() > 1 {
            defects.push(TreeDefect::MultipleRoots { roots: roots.clone() });
        }
        if let Some(&root) = roots.first() {
            if root != 0 {
                defects.push(TreeDefect::RootNotFirst { root });
            }
        }
        for (k, node) in self.nodes.iter().enumerate() {
            if let Some(p) = node.parent {
                if p >= n {
                    defects.push(TreeDefect::ParentOutOfRange { node: k, parent: p });
                } else {
                    if p >= k {
                        defects.push(TreeDefect::OrderViolation { node: k, parent: p });
                    }
                    if !self.nodes[p].children.contains(&k) {
                        defects.push(TreeDefect::ChildListMismatch { node: p, child: k });
                    }
                }
            }
            for &c in &node.children {
                if c >= n || self.nodes[c].parent != Some(k) {
                    defects.push(TreeDefect::ChildListMismatch { node: k, child: c });
                }
            }
            if node.children.windows(2).any(|w| w[0] >= w[1]) {
                defects.push(TreeDefect::ChildOrder { node: k });
            }
        }
        defects
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> NodeRef {
        NodeRef(0)
    }

    pub fn nodes(&self) -> &[TreeNode<T>] {
        &self.nodes
    }

    pub fn node(&self, node: NodeRef) -> Result<&TreeNode<T>, TreeError> {
        self.nodes.get(node.0).ok_or(TreeError::NodeOutOfRange {
            index: node.0,
            len: self.nodes.len(),
        })
    }

    pub fn check(&self, node: NodeRef) -> Result<NodeRef, TreeError> {
        self.node(node).map(|_| node)
    }

    pub fn payload(&self, node: NodeRef) -> &T {
        &self.nodes[node.0].payload
    }

    pub fn payloads(&self) -> impl Iterator<Item = &T> {
        self.nodes.iter().map(|n| &n.payload)
    }

    pub fn parent(&self, node: NodeRef) -> Option<NodeRef> {
        self.nodes[node.0].parent.map(NodeRef)
    }

    pub fn children(&self, node: NodeRef) -> impl Iterator<Item = NodeRef> + '_ {
        self.nodes[node.0].children.iter().map(|&c| NodeRef(c))
    }

    /// Same topology with a different payload per node.
    pub fn map<U>(&self, mut f: impl FnMut(NodeRef, &T) -> U) -> Tree<U> {
        Tree {
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(k, n)| TreeNode {
                    parent: n.parent,
                    children: n.children.clone(),
                    payload: f(NodeRef(k), &n.payload),
                })
                .collect(),
        }
    }

    pub fn depth(&self, node: NodeRef) -> Result<usize, TreeError> {
        self.check(node)?;
        let mut depth = 0;
        let mut cur = node.0;
        while let Some(p) = self.nodes[cur].parent {
            depth += 1;
            cur = p;
        }
        Ok(depth)
    }

    /// Nodes from the root down to `node`, inclusive.
    pub fn path_from_root(&self, node: NodeRef) -> Result<Vec<NodeRef>, TreeError> {
        self.check(node)?;
        let mut path = vec![node];
        let mut cur = node.0;
        while let Some(p) = self.nodes[cur].parent {
            path.push(NodeRef(p));
            cur = p;
        }
        path.reverse();
        Ok(path)
    }

    /// Deepest node that is an ancestor-or-self of every node in `nodes`.
    pub fn lca(&self, nodes: &[NodeRef]) -> Result<NodeRef, TreeError> {
        let (&first, rest) = nodes.split_first().ok_or(TreeError::EmptySet)?;
        let mut acc = self.check(first)?;
        for &other in rest {
            acc = self.lca_pair(acc, self.check(other)?);
        }
        Ok(acc)
    }

    fn lca_pair(&self, a: NodeRef, b: NodeRef) -> NodeRef {
        // Parents have smaller indices, so stepping the larger index up
        // meets at the common ancestor.
        let (mut a, mut b) = (a.0, b.0);
        while a != b {
            if a > b {
                a = self.nodes[a].parent.expect("non-root node has a parent");
            } else {
                b = self.nodes[b].parent.expect("non-root node has a parent");
            }
        }
        NodeRef(a)
    }

    /// `node` followed by all of its descendants in pre-order.
    pub fn subtree_nodes(&self, node: NodeRef) -> Result<Vec<NodeRef>, TreeError> {
        self.check(node)?;
        let mut out = Vec::new();
        let mut stack = vec![node.0];
        while let Some(k) = stack.pop() {
            out.push(NodeRef(k));
            stack.extend(self.nodes[k].children.iter().rev());
        }
        Ok(out)
    }

    /// True when `ancestor` lies on the root path of `node` (self included).
    pub fn is_ancestor_or_self(&self, ancestor: NodeRef, node: NodeRef) -> bool {
        let mut cur = Some(node.0);
        while let Some(k) = cur {
            if k == ancestor.0 {
                return true;
            }
            if k < ancestor.0 {
                return false;
            }
            cur = self.nodes[k].parent;
        }
        false
    }
}
