//! The medical-code hierarchy: loading, validation, virtual-leaf padding
//! and level-wise ancestor lookup.
//!
//! Node ids are dense and assigned breadth-first from the root, with
//! children visited in input order. Levels are 1-based: the root is level 1
//! and recorded codes live at level `H` once the tree is padded.

use std::collections::{HashMap, HashSet, VecDeque};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = usize;

/// Parent token marking the root in an edge list.
pub const ROOT_TOKEN: &str = "ROOT";

/// Default label suffix for padding nodes: `<origin>~v<level>`.
pub const DEFAULT_VIRTUAL_SUFFIX: &str = "~v";

#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("cycle detected at code {0:?}")]
    CycleDetected(String),
    #[error("multiple roots: {0:?} and {1:?}")]
    MultipleRoots(String, String),
    #[error("code {0:?} has no parent and is not the root")]
    OrphanNode(String),
    #[error("code {0:?} has more than one parent")]
    MultipleParents(String),
    #[error("duplicate edge {0:?} -> {1:?}")]
    DuplicateEdge(String, String),
    #[error("edge list is empty")]
    Empty,
    #[error("level {level} out of range 1..={max}")]
    LevelOutOfRange { level: usize, max: usize },
    #[error("node {0} is not a leaf")]
    NotALeaf(NodeId),
    #[error("unknown code {0:?}")]
    UnknownCode(String),
    #[error("ontology csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeNode {
    pub id: NodeId,
    pub label: String,
    pub level: usize,
    pub is_virtual: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ontology {
    nodes: Vec<CodeNode>,
    parent: Vec<Option<NodeId>>,
    children: Vec<Vec<NodeId>>,
    /// `levels[h - 1]` lists the ids at level `h`, ascending.
    levels: Vec<Vec<NodeId>>,
    /// Position of each node inside its level list.
    level_pos: Vec<usize>,
    /// For virtual nodes, the original node whose chain they extend.
    origin: Vec<Option<NodeId>>,
    by_label: HashMap<String, NodeId>,
    ancestors: AncestorMap,
}

/// `(leaf position in C, level h) -> ancestor id`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AncestorMap {
    depth: usize,
    table: Vec<NodeId>,
}

impl AncestorMap {
    fn build(ont: &Ontology) -> Self {
        let depth = ont.depth();
        let leaves = ont.levels.last().map_or(&[][..], Vec::as_slice);
        let mut table = Vec::with_capacity(leaves.len() * depth);
        for &leaf in leaves {
            let mut chain = vec![leaf; depth];
            let mut cur = leaf;
            for h in (0..depth).rev() {
                chain[h] = cur;
                if let Some(p) = ont.parent[cur] {
                    cur = p;
                }
            }
            table.extend(chain);
        }
        Self { depth, table }
    }

    /// Ancestor of the `leaf_pos`-th leaf at level `h` (1-based).
    pub fn get(&self, leaf_pos: usize, h: usize) -> NodeId {
        self.table[leaf_pos * self.depth + h - 1]
    }
}

impl Ontology {
    /// Builds a validated tree from `(parent, child)` label pairs.
    ///
    /// The root is either the child of a [`ROOT_TOKEN`] edge or, without
    /// such an edge, the unique label that never appears as a child.
    pub fn from_edges<S: AsRef<str>>(edges: &[(S, S)]) -> Result<Self, OntologyError> {
        if edges.is_empty() {
            return Err(OntologyError::Empty);
        }
        let mut order: Vec<String> = Vec::new();
        let mut seen: HashSet<&str> = HashSet::new();
        let mut parent_of: HashMap<&str, &str> = HashMap::new();
        let mut kids: HashMap<&str, Vec<&str>> = HashMap::new();
        let mut marked_root: Option<&str> = None;
        let mut edge_set: HashSet<(&str, &str)> = HashSet::new();

        for (p, c) in edges {
            let (p, c) = (p.as_ref(), c.as_ref());
            if p == ROOT_TOKEN {
                match marked_root {
                    Some(r) if r != c => return Err(OntologyError::MultipleRoots(r.to_string(), c.to_string())),
                    _ => marked_root = Some(c),
                }
                if seen.insert(c) {
                    order.push(c.to_string());
                }
                continue;
            }
            if p == c {
                return Err(OntologyError::CycleDetected(c.to_string()));
            }
            if !edge_set.insert((p, c)) {
                return Err(OntologyError::DuplicateEdge(p.to_string(), c.to_string()));
            }
            if parent_of.insert(c, p).is_some() {
                return Err(OntologyError::MultipleParents(c.to_string()));
            }
            kids.entry(p).or_default().push(c);
            for label in [p, c] {
                if seen.insert(label) {
                    order.push(label.to_string());
                }
            }
        }

        let root = match marked_root {
            Some(r) => {
                if parent_of.contains_key(r) {
                    return Err(OntologyError::CycleDetected(r.to_string()));
                }
                if let Some(orphan) = order.iter().find(|l| l.as_str() != r && !parent_of.contains_key(l.as_str())) {
                    return Err(OntologyError::OrphanNode(orphan.clone()));
                }
                r
            }
            None => {
                let roots: Vec<&String> = order.iter().filter(|l| !parent_of.contains_key(l.as_str())).collect();
                match roots.as_slice() {
                    [r] => r.as_str(),
                    [a, b, ..] => return Err(OntologyError::MultipleRoots((*a).clone(), (*b).clone())),
                    [] => return Err(OntologyError::CycleDetected(order[0].clone())),
                }
            }
        };

        // Breadth-first id assignment.
        let mut nodes = Vec::with_capacity(order.len());
        let mut parent = Vec::with_capacity(order.len());
        let mut children: Vec<Vec<NodeId>> = Vec::with_capacity(order.len());
        let mut by_label = HashMap::with_capacity(order.len());
        let mut queue = VecDeque::new();
        queue.push_back((root, None::<NodeId>, 1usize));
        while let Some((label, par, level)) = queue.pop_front() {
            let id = nodes.len();
            nodes.push(CodeNode {
                id,
                label: label.to_string(),
                level,
                is_virtual: false,
            });
            parent.push(par);
            children.push(Vec::new());
            if let Some(p) = par {
                children[p].push(id);
            }
            by_label.insert(label.to_string(), id);
            for &k in kids.get(label).map_or(&[][..], Vec::as_slice) {
                queue.push_back((k, Some(id), level + 1));
            }
        }
        if nodes.len() != order.len() {
            // Anything not reached from the root hangs off a cycle.
            let stuck = order.iter().find(|l| !by_label.contains_key(l.as_str())).expect("some label unreached");
            return Err(OntologyError::CycleDetected(stuck.clone()));
        }
        let n = nodes.len();
        Ok(Self::assemble(nodes, parent, children, vec![None; n]))
    }

    fn assemble(
        nodes: Vec<CodeNode>,
        parent: Vec<Option<NodeId>>,
        children: Vec<Vec<NodeId>>,
        origin: Vec<Option<NodeId>>,
    ) -> Self {
        let depth = nodes.iter().map(|n| n.level).max().unwrap_or(0);
        let mut levels = vec![Vec::new(); depth];
        let mut level_pos = vec![0; nodes.len()];
        for node in &nodes {
            let lvl = &mut levels[node.level - 1];
            level_pos[node.id] = lvl.len();
            lvl.push(node.id);
        }
        let by_label = nodes.iter().map(|n| (n.label.clone(), n.id)).collect();
        let mut ont = Self {
            nodes,
            parent,
            children,
            levels,
            level_pos,
            origin,
            by_label,
            ancestors: AncestorMap {
                depth: 0,
                table: Vec::new(),
            },
        };
        ont.ancestors = AncestorMap::build(&ont);
        ont
    }

    /// Extends every leaf above level `H` with a chain of virtual
    /// descendants down to level `H`. Existing ids are kept; new nodes are
    /// appended. Labels are `<origin><suffix><level>`.
    pub fn pad_virtual_leaves(&self, suffix: &str) -> Self {
        let depth = self.depth();
        let mut nodes = self.nodes.clone();
        let mut parent = self.parent.clone();
        let mut children = self.children.clone();
        let mut origin = self.origin.clone();
        for leaf in 0..self.nodes.len() {
            if !self.children[leaf].is_empty() || self.nodes[leaf].level == depth {
                continue;
            }
            let root_label = &self.nodes[leaf].label;
            let mut prev = leaf;
            for level in self.nodes[leaf].level + 1..=depth {
                let id = nodes.len();
                nodes.push(CodeNode {
                    id,
                    label: format!("{root_label}{suffix}{level}"),
                    level,
                    is_virtual: true,
                });
                parent.push(Some(prev));
                children.push(Vec::new());
                children[prev].push(id);
                origin.push(Some(leaf));
                prev = id;
            }
        }
        Self::assemble(nodes, parent, children, origin)
    }

    /// Number of levels `H`.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[CodeNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &CodeNode {
        &self.nodes[id]
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parent[id]
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.children[id]
    }

    /// Ids at level `h` (1-based), ascending.
    pub fn level(&self, h: usize) -> &[NodeId] {
        &self.levels[h - 1]
    }

    /// `n_h` for h = 1..=H.
    pub fn level_counts(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    /// Index of a node within its level.
    pub fn level_position(&self, id: NodeId) -> usize {
        self.level_pos[id]
    }

    /// The leaf codes `C`: nodes at level `H`, ascending id.
    pub fn leaves(&self) -> &[NodeId] {
        self.levels.last().map_or(&[][..], Vec::as_slice)
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().len()
    }

    /// True once every leaf sits at level `H`.
    pub fn is_padded(&self) -> bool {
        let depth = self.depth();
        self.nodes
            .iter()
            .all(|n| !self.children[n.id].is_empty() || n.level == depth)
    }

    pub fn id_of(&self, label: &str) -> Option<NodeId> {
        self.by_label.get(label).copied()
    }

    /// Original node a virtual node was created for.
    pub fn virtual_origin(&self, id: NodeId) -> Option<NodeId> {
        self.origin[id]
    }

    /// `ρ^h(leaf)`.
    pub fn ancestor(&self, leaf: NodeId, h: usize) -> Result<NodeId, OntologyError> {
        if h == 0 || h > self.depth() {
            return Err(OntologyError::LevelOutOfRange {
                level: h,
                max: self.depth(),
            });
        }
        if self.nodes[leaf].level != self.depth() {
            return Err(OntologyError::NotALeaf(leaf));
        }
        Ok(self.ancestors.get(self.level_pos[leaf], h))
    }

    pub fn ancestor_map(&self) -> &AncestorMap {
        &self.ancestors
    }

    /// For each node of level `h >= 2`, the level position of its parent
    /// in level `h - 1`.
    pub fn parent_positions(&self, h: usize) -> Vec<usize> {
        self.level(h)
            .iter()
            .map(|&id| self.level_pos[self.parent[id].expect("non-root has a parent")])
            .collect()
    }

    /// Builds the recorded-code vocabulary: leaf labels map to their own
    /// position in `C`; labels of shallow nodes that were padded map to the
    /// end of their virtual chain.
    pub fn code_vocabulary(&self) -> CodeVocabulary {
        let mut map = HashMap::new();
        for (pos, &leaf) in self.leaves().iter().enumerate() {
            map.insert(self.nodes[leaf].label.clone(), pos);
            if let Some(o) = self.origin[leaf] {
                map.insert(self.nodes[o].label.clone(), pos);
            }
        }
        let labels = self.leaves().iter().map(|&l| self.nodes[l].label.clone()).collect();
        CodeVocabulary { map, labels }
    }

    /// Non-virtual `(parent, child)` edges in child-id order, preceded by
    /// the root marker.
    pub fn original_edges(&self) -> Vec<(String, String)> {
        let mut out = vec![(ROOT_TOKEN.to_string(), self.nodes[0].label.clone())];
        for n in self.nodes.iter().skip(1) {
            if n.is_virtual {
                continue;
            }
            let p = self.parent[n.id].expect("non-root has a parent");
            out.push((self.nodes[p].label.clone(), n.label.clone()));
        }
        out
    }

    /// All tree edges as `(parent id, child id)`, in child-id order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        (0..self.nodes.len())
            .filter_map(|c| self.parent[c].map(|p| (p, c)))
            .collect()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, OntologyError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers().map_err(|e| OntologyError::Csv(e.to_string()))?;
        if headers.len() != 2 || &headers[0] != "parent" || &headers[1] != "child" {
            return Err(OntologyError::Csv(format!("expected header parent,child, got {:?}", headers)));
        }
        let mut edges = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| OntologyError::Csv(e.to_string()))?;
            if rec.len() != 2 {
                return Err(OntologyError::Csv(format!("expected 2 fields, got {}", rec.len())));
            }
            edges.push((rec[0].to_string(), rec[1].to_string()));
        }
        Self::from_edges(&edges)
    }

    pub fn load(path: &Path) -> Result<Self, OntologyError> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    /// Writes the non-virtual tree; reloading and re-padding reproduces the
    /// same ids.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), OntologyError> {
        write_edges_csv(&self.original_edges(), writer)
    }

    pub fn save(&self, path: &Path) -> Result<(), OntologyError> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

pub fn write_edges_csv<W: Write>(edges: &[(String, String)], writer: W) -> Result<(), OntologyError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let csv_err = |e: csv::Error| OntologyError::Csv(e.to_string());
    w.write_record(["parent", "child"]).map_err(csv_err)?;
    for (p, c) in edges {
        w.write_record([p, c]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Map from recorded code strings to positions in `C`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeVocabulary {
    map: HashMap<String, usize>,
    labels: Vec<String>,
}

impl CodeVocabulary {
    pub fn index(&self, code: &str) -> Result<usize, OntologyError> {
        self.map
            .get(code)
            .copied()
            .ok_or_else(|| OntologyError::UnknownCode(code.to_string()))
    }

    pub fn contains(&self, code: &str) -> bool {
        self.map.contains_key(code)
    }

    /// Leaf label of position `i` in `C`.
    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}
