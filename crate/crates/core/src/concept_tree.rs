//! Dynamic rooted concept hierarchy.
//!
//! Nodes are identified by dense [`ConceptId`]s assigned in insertion order,
//! so per-concept statistics elsewhere in the crate are flat vectors indexed
//! by id. The tree only grows: there is no removal, renaming or re-parenting.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Separator used by the path wire format (`root/child/grandchild`).
pub const PATH_SEPARATOR: char = '/';

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("concept label is empty")]
    EmptyLabel,
    #[error("concept label {0:?} contains a path separator or line break")]
    InvalidLabel(String),
    #[error("unknown parent concept {0}")]
    UnknownParent(ConceptId),
    #[error("unknown concept {0}")]
    UnknownConcept(ConceptId),
    #[error("concept path is empty")]
    EmptyPath,
    #[error("path starts at {found:?} but the root is {expected:?}")]
    RootMismatch { expected: String, found: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptId(pub usize);

impl ConceptId {
    pub const ROOT: ConceptId = ConceptId(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0
    }

    #[inline]
    pub fn is_root(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Canonical form used for sibling label matching.
fn normalize(label: &str) -> String {
    label.trim().to_lowercase()
}

fn check_label(label: &str) -> Result<&str, TreeError> {
    let trimmed = label.trim();
    if trimmed.is_empty() {
        return Err(TreeError::EmptyLabel);
    }
    if trimmed.contains(PATH_SEPARATOR) || trimmed.contains(['\n', '\r']) {
        return Err(TreeError::InvalidLabel(trimmed.to_string()));
    }
    Ok(trimmed)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptTree {
    labels: Vec<String>,
    parent: Vec<ConceptId>,
    depth: Vec<usize>,
    children: Vec<Vec<ConceptId>>,
}

impl ConceptTree {
    pub fn new(root_label: &str) -> Result<Self, TreeError> {
        let label = check_label(root_label)?;
        Ok(Self {
            labels: vec![label.to_string()],
            parent: vec![ConceptId::ROOT],
            depth: vec![0],
            children: vec![Vec::new()],
        })
    }

    /// Number of concepts, root included.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Always false: a tree holds at least its root.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, id: ConceptId) -> bool {
        id.0 < self.labels.len()
    }

    pub fn ids(&self) -> impl DoubleEndedIterator<Item = ConceptId> + ExactSizeIterator + '_ {
        (0..self.len()).map(ConceptId)
    }

    pub fn root_label(&self) -> &str {
        &self.labels[0]
    }

    pub fn label(&self, id: ConceptId) -> &str {
        &self.labels[id.0]
    }

    /// Parent of `id`; the root is its own parent.
    pub fn parent(&self, id: ConceptId) -> ConceptId {
        self.parent[id.0]
    }

    pub fn depth(&self, id: ConceptId) -> usize {
        self.depth[id.0]
    }

    pub fn children(&self, id: ConceptId) -> &[ConceptId] {
        &self.children[id.0]
    }

    pub fn is_leaf(&self, id: ConceptId) -> bool {
        self.children[id.0].is_empty()
    }

    pub fn leaves(&self) -> Vec<ConceptId> {
        self.ids().filter(|&v| self.is_leaf(v)).collect()
    }

    pub fn max_depth(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    pub fn find_child(&self, parent: ConceptId, label: &str) -> Option<ConceptId> {
        let key = normalize(label);
        self.children
            .get(parent.0)?
            .iter()
            .copied()
            .find(|&c| normalize(&self.labels[c.0]) == key)
    }

    /// Inserts `label` under `parent`, or returns the existing sibling with the
    /// same (trimmed, case-insensitive) label.
    pub fn insert_child(&mut self, parent: ConceptId, label: &str) -> Result<ConceptId, TreeError> {
        if !self.contains(parent) {
            return Err(TreeError::UnknownParent(parent));
        }
        let label = check_label(label)?;
        if let Some(existing) = self.find_child(parent, label) {
            return Ok(existing);
        }
        let id = ConceptId(self.labels.len());
        self.labels.push(label.to_string());
        self.parent.push(parent);
        self.depth.push(self.depth[parent.0] + 1);
        self.children.push(Vec::new());
        self.children[parent.0].push(id);
        Ok(id)
    }

    /// Ancestors of `id` from its parent up to the root (empty for the root).
    pub fn ancestors(&self, id: ConceptId) -> Ancestors<'_> {
        Ancestors { tree: self, current: id }
    }

    /// Labels from the root down to `id`.
    pub fn path(&self, id: ConceptId) -> Vec<&str> {
        let mut path: Vec<&str> = std::iter::once(id)
            .chain(self.ancestors(id))
            .map(|v| self.label(v))
            .collect();
        path.reverse();
        path
    }

    pub fn path_string(&self, id: ConceptId) -> String {
        self.path(id).join("/")
    }

    /// Walks `path` from the root, inserting missing nodes.
    pub fn resolve_path<S: AsRef<str>>(&mut self, path: &[S]) -> Result<ConceptId, TreeError> {
        let (first, rest) = path.split_first().ok_or(TreeError::EmptyPath)?;
        let first = first.as_ref();
        if normalize(first) != normalize(self.root_label()) {
            return Err(TreeError::RootMismatch {
                expected: self.root_label().to_string(),
                found: first.trim().to_string(),
            });
        }
        let mut node = ConceptId::ROOT;
        for label in rest {
            node = self.insert_child(node, label.as_ref())?;
        }
        Ok(node)
    }

    /// Parses and resolves one `root/a/b` line.
    pub fn resolve_path_str(&mut self, line: &str) -> Result<ConceptId, TreeError> {
        let parts: Vec<&str> = line
            .trim()
            .split(PATH_SEPARATOR)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        self.resolve_path(&parts)
    }

    /// Looks up an existing path without inserting.
    pub fn lookup_path<S: AsRef<str>>(&self, path: &[S]) -> Option<ConceptId> {
        let (first, rest) = path.split_first()?;
        if normalize(first.as_ref()) != normalize(self.root_label()) {
            return None;
        }
        rest.iter()
            .try_fold(ConceptId::ROOT, |node, label| self.find_child(node, label.as_ref()))
    }

    /// Smallest ancestor-closed superset of `ids`.
    pub fn ancestor_closure<I>(&self, ids: I) -> Result<ConceptSet, TreeError>
    where
        I: IntoIterator<Item = ConceptId>,
    {
        let mut active = BTreeSet::new();
        for id in ids {
            if !self.contains(id) {
                return Err(TreeError::UnknownConcept(id));
            }
            let mut v = id;
            while active.insert(v) && !v.is_root() {
                v = self.parent(v);
            }
        }
        Ok(ConceptSet { active })
    }

    /// Whether `set` only references known concepts and is ancestor-closed.
    pub fn is_closed(&self, set: &ConceptSet) -> bool {
        set.iter().all(|v| {
            self.contains(v) && (v.is_root() || set.contains(self.parent(v)))
        })
    }

    /// Every node as a `root/.../label` line, in id order.
    pub fn path_lines(&self) -> String {
        let mut out = String::new();
        for id in self.ids() {
            out.push_str(&self.path_string(id));
            out.push('\n');
        }
        out
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph concepts {\n");
        for id in self.ids() {
            let _ = writeln!(out, "  n{} [label=\"{}\"];", id.0, escape_dot(self.label(id)));
        }
        for id in self.ids().skip(1) {
            let _ = writeln!(out, "  n{} -> n{};", self.parent(id).0, id.0);
        }
        out.push_str("}\n");
        out
    }
}

fn escape_dot(label: &str) -> String {
    label.replace('\\', "\\\\").replace('"', "\\\"")
}

pub struct Ancestors<'a> {
    tree: &'a ConceptTree,
    current: ConceptId,
}

impl Iterator for Ancestors<'_> {
    type Item = ConceptId;

    fn next(&mut self) -> Option<ConceptId> {
        if self.current.is_root() {
            return None;
        }
        self.current = self.tree.parent(self.current);
        Some(self.current)
    }
}

/// An ancestor-closed set of active concepts.
///
/// Sets are built through [`ConceptTree::ancestor_closure`] or the closed
/// insertion helpers, so closure holds with respect to the tree they were
/// built against.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptSet {
    active: BTreeSet<ConceptId>,
}

impl ConceptSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn root_only() -> Self {
        Self { active: BTreeSet::from([ConceptId::ROOT]) }
    }

    pub fn contains(&self, id: ConceptId) -> bool {
        self.active.contains(&id)
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ConceptId> + '_ {
        self.active.iter().copied()
    }

    /// Activates `id` together with its ancestors.
    pub fn insert_closed(&mut self, tree: &ConceptTree, id: ConceptId) -> Result<(), TreeError> {
        if !tree.contains(id) {
            return Err(TreeError::UnknownConcept(id));
        }
        let mut v = id;
        while self.active.insert(v) && !v.is_root() {
            v = tree.parent(v);
        }
        Ok(())
    }

    /// Deactivates `id` and its whole subtree. Removing the root empties the set.
    pub fn remove_subtree(&mut self, tree: &ConceptTree, id: ConceptId) {
        let mut stack = vec![id];
        while let Some(v) = stack.pop() {
            if self.active.remove(&v) {
                stack.extend_from_slice(tree.children(v));
            }
        }
    }

    /// Boolean indicator vector of length `n`.
    pub fn indicator(&self, n: usize) -> Vec<bool> {
        let mut out = vec![false; n];
        for v in self.iter().filter(|v| v.0 < n) {
            out[v.0] = true;
        }
        out
    }
}

impl FromIterator<ConceptId> for ConceptSet {
    /// Collects ids verbatim; callers are responsible for closure.
    fn from_iter<T: IntoIterator<Item = ConceptId>>(iter: T) -> Self {
        Self { active: iter.into_iter().collect() }
    }
}
