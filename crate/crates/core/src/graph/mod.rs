//! Immutable graph storage: CSR adjacency with per-arc weights, a dense
//! node-feature matrix, labels and train/val/test assignments.

pub mod convert;
pub mod io;
pub mod synthetic;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}:{line}: node index {index} out of range (graph has {num_nodes} nodes)")]
    IndexOutOfRange {
        path: PathBuf,
        line: usize,
        index: usize,
        num_nodes: usize,
    },
    #[error("{path}: expected {expected} rows, found {found}")]
    RowCount {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("invalid graph: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// A labeled (src, dst) pair for edge classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledEdge {
    pub src: usize,
    pub dst: usize,
    pub label: u8,
    pub split: Split,
}

/// Node labels. Unlabeled nodes hold `None`.
#[derive(Clone, Debug, PartialEq)]
pub enum Labels {
    Single {
        num_classes: usize,
        values: Vec<Option<usize>>,
    },
    Multi {
        num_classes: usize,
        values: Vec<Option<Vec<bool>>>,
    },
}

impl Labels {
    pub fn num_classes(&self) -> usize {
        match self {
            Labels::Single { num_classes, .. } | Labels::Multi { num_classes, .. } => *num_classes,
        }
    }

    pub fn is_multilabel(&self) -> bool {
        matches!(self, Labels::Multi { .. })
    }

    pub fn has_label(&self, v: usize) -> bool {
        match self {
            Labels::Single { values, .. } => values[v].is_some(),
            Labels::Multi { values, .. } => values[v].is_some(),
        }
    }

    /// Target row for node `v`: one-hot for single-label, 0/1 bits otherwise.
    pub fn target(&self, v: usize) -> Option<Vec<f64>> {
        match self {
            Labels::Single {
                num_classes,
                values,
            } => values[v].map(|c| {
                let mut t = vec![0.0; *num_classes];
                t[c] = 1.0;
                t
            }),
            Labels::Multi { values, .. } => values[v]
                .as_ref()
                .map(|bits| bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()),
        }
    }
}

/// Row-major `f32` node-feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Features {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, GraphError> {
        if data.len() != rows * cols {
            return Err(GraphError::Invalid(format!(
                "feature buffer has {} values, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, v: usize) -> &[f32] {
        &self.data[v * self.cols..(v + 1) * self.cols]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn scaled(&self, c: f32) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * c).collect(),
        }
    }
}

/// Per-node type tags for bipartite graphs.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeKinds {
    pub names: Vec<String>,
    pub of_node: Vec<u16>,
    /// Permit edges between nodes of the same kind.
    pub homogeneous: bool,
}

/// An input edge before CSR assembly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f32,
}

impl Edge {
    pub fn new(src: usize, dst: usize) -> Self {
        Self {
            src,
            dst,
            weight: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    weights: Vec<f32>,
    features: Features,
    labels: Option<Labels>,
    kinds: Option<NodeKinds>,
    node_split: Vec<Option<Split>>,
    edges: Vec<LabeledEdge>,
}

impl Graph {
    /// Assembles CSR from undirected edges. Each edge becomes two arcs
    /// (one for a self-loop); repeated arcs merge by summing weights.
    pub fn from_edges(
        num_nodes: usize,
        edges: &[Edge],
        features: Features,
    ) -> Result<Self, GraphError> {
        if features.rows() != num_nodes {
            return Err(GraphError::Invalid(format!(
                "feature matrix has {} rows for {num_nodes} nodes",
                features.rows()
            )));
        }
        let mut arcs: Vec<(u32, u32, f32)> = Vec::with_capacity(edges.len() * 2);
        for e in edges {
            if e.src >= num_nodes || e.dst >= num_nodes {
                return Err(GraphError::Invalid(format!(
                    "edge ({}, {}) out of range for {num_nodes} nodes",
                    e.src, e.dst
                )));
            }
            if !(e.weight >= 0.0) || !e.weight.is_finite() {
                return Err(GraphError::Invalid(format!(
                    "edge ({}, {}) has invalid weight {}",
                    e.src, e.dst, e.weight
                )));
            }
            arcs.push((e.src as u32, e.dst as u32, e.weight));
            if e.src != e.dst {
                arcs.push((e.dst as u32, e.src as u32, e.weight));
            }
        }
        arcs.sort_by_key(|&(s, d, _)| (s, d));
        let mut offsets = vec![0usize; num_nodes + 1];
        let mut neighbors = Vec::with_capacity(arcs.len());
        let mut weights: Vec<f32> = Vec::with_capacity(arcs.len());
        let mut last: Option<(u32, u32)> = None;
        for (s, d, w) in arcs {
            if last == Some((s, d)) {
                *weights.last_mut().expect("merged arc") += w;
                continue;
            }
            last = Some((s, d));
            neighbors.push(d);
            weights.push(w);
            offsets[s as usize + 1] += 1;
        }
        for v in 0..num_nodes {
            offsets[v + 1] += offsets[v];
        }
        Ok(Self {
            offsets,
            neighbors,
            weights,
            features,
            labels: None,
            kinds: None,
            node_split: vec![None; num_nodes],
            edges: Vec::new(),
        })
    }

    pub fn with_labels(mut self, labels: Labels) -> Result<Self, GraphError> {
        let n = match &labels {
            Labels::Single { values, .. } => values.len(),
            Labels::Multi { values, .. } => values.len(),
        };
        if n != self.num_nodes() {
            return Err(GraphError::Invalid(format!(
                "labels cover {n} nodes, graph has {}",
                self.num_nodes()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_node_splits(mut self, splits: Vec<Option<Split>>) -> Result<Self, GraphError> {
        if splits.len() != self.num_nodes() {
            return Err(GraphError::Invalid(format!(
                "splits cover {} nodes, graph has {}",
                splits.len(),
                self.num_nodes()
            )));
        }
        self.node_split = splits;
        Ok(self)
    }

    pub fn with_edges(mut self, edges: Vec<LabeledEdge>) -> Result<Self, GraphError> {
        let n = self.num_nodes();
        if let Some(e) = edges.iter().find(|e| e.src >= n || e.dst >= n) {
            return Err(GraphError::Invalid(format!(
                "labeled edge ({}, {}) out of range",
                e.src, e.dst
            )));
        }
        self.edges = edges;
        self.validate_kinds()?;
        Ok(self)
    }

    pub fn with_kinds(mut self, kinds: NodeKinds) -> Result<Self, GraphError> {
        if kinds.of_node.len() != self.num_nodes() {
            return Err(GraphError::Invalid("node kinds do not cover every node".into()));
        }
        self.kinds = Some(kinds);
        self.validate_kinds()?;
        Ok(self)
    }

    fn validate_kinds(&self) -> Result<(), GraphError> {
        let Some(k) = &self.kinds else { return Ok(()) };
        if k.homogeneous {
            return Ok(());
        }
        for v in 0..self.num_nodes() {
            for &u in self.neighbors(v).0 {
                if k.of_node[v] == k.of_node[u as usize] {
                    return Err(GraphError::Invalid(format!(
                        "edge ({v}, {u}) joins two {} nodes in a bipartite graph",
                        k.names[k.of_node[v] as usize]
                    )));
                }
            }
        }
        for e in &self.edges {
            if k.of_node[e.src] == k.of_node[e.dst] {
                return Err(GraphError::Invalid(format!(
                    "labeled edge ({}, {}) joins nodes of the same kind",
                    e.src, e.dst
                )));
            }
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of stored directed arcs.
    pub fn num_arcs(&self) -> usize {
        self.neighbors.len()
    }

    /// Undirected edge count: self-loops count once.
    pub fn num_undirected_edges(&self) -> usize {
        let loops = (0..self.num_nodes())
            .filter(|&v| self.neighbors(v).0.contains(&(v as u32)))
            .count();
        (self.num_arcs() - loops) / 2 + loops
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Neighbor ids of `v` in ascending order with aligned arc weights.
    pub fn neighbors(&self, v: usize) -> (&[u32], &[f32]) {
        let (a, b) = (self.offsets[v], self.offsets[v + 1]);
        (&self.neighbors[a..b], &self.weights[a..b])
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn kinds(&self) -> Option<&NodeKinds> {
        self.kinds.as_ref()
    }

    pub fn node_split(&self, v: usize) -> Option<Split> {
        self.node_split[v]
    }

    /// Nodes assigned to `split` that carry a label, ascending.
    pub fn labeled_nodes(&self, split: Split) -> Vec<usize> {
        let Some(labels) = &self.labels else {
            return Vec::new();
        };
        (0..self.num_nodes())
            .filter(|&v| self.node_split[v] == Some(split) && labels.has_label(v))
            .collect()
    }

    pub fn split_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for s in self.node_split.iter().flatten() {
            c[*s as usize] += 1;
        }
        c
    }

    pub fn labeled_edges(&self) -> &[LabeledEdge] {
        &self.edges
    }

    pub fn edges_in(&self, split: Split) -> Vec<LabeledEdge> {
        self.edges.iter().filter(|e| e.split == split).copied().collect()
    }

    /// Same topology and labels, different features (same width required by
    /// callers that reuse trained parameters).
    pub fn with_features(mut self, features: Features) -> Result<Self, GraphError> {
        if features.rows() != self.num_nodes() {
            return Err(GraphError::Invalid("feature row count mismatch".into()));
        }
        self.features = features;
        Ok(self)
    }
}
