//! Neural architectures as directed acyclic operation graphs.
//!
//! Nodes are dense indices `0..num_nodes`, each carrying exactly one
//! operation from an [`OpVocabulary`]. Edges `(i, j)` point from the
//! producer `i` to the consumer `j`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("graph contains a cycle through node {node}")]
    CyclicGraph { node: usize },
    #[error("feature row of node {node} is not one-hot")]
    BadFeatureRow { node: usize },
    #[error("edge ({from}, {to}) references a node outside 0..{num_nodes}")]
    DanglingEdgeIndex { from: usize, to: usize, num_nodes: usize },
    #[error("self-loop on node {node}")]
    SelfLoop { node: usize },
    #[error("duplicate edge ({from}, {to})")]
    DuplicateEdge { from: usize, to: usize },
    #[error("invalid vocabulary: {0}")]
    BadVocabulary(String),
    #[error("unknown operation `{0}`")]
    UnknownOp(String),
}

/// Ordered, duplicate-free list of operation names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct OpVocabulary {
    ops: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl OpVocabulary {
    pub fn new<S: Into<String>>(ops: impl IntoIterator<Item = S>) -> Result<Self, GraphError> {
        let ops: Vec<String> = ops.into_iter().map(Into::into).collect();
        if ops.is_empty() {
            return Err(GraphError::BadVocabulary("empty".into()));
        }
        let mut index = HashMap::with_capacity(ops.len());
        for (i, op) in ops.iter().enumerate() {
            if index.insert(op.clone(), i).is_some() {
                return Err(GraphError::BadVocabulary(format!("duplicate op `{op}`")));
            }
        }
        Ok(Self { ops, index })
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn index_of(&self, op: &str) -> Result<usize, GraphError> {
        self.index
            .get(op)
            .copied()
            .ok_or_else(|| GraphError::UnknownOp(op.to_string()))
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.ops.get(index).map(String::as_str)
    }

    pub fn ops(&self) -> &[String] {
        &self.ops
    }
}

impl TryFrom<Vec<String>> for OpVocabulary {
    type Error = GraphError;

    fn try_from(ops: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(ops)
    }
}

impl From<OpVocabulary> for Vec<String> {
    fn from(v: OpVocabulary) -> Self {
        v.ops
    }
}

/// An architecture graph `G = (X, E)`.
///
/// The one-hot feature matrix is stored row-major as a flat `Vec<f64>` of
/// shape `num_nodes x num_ops`. Use [`ArchGraph::from_ops`] for the common
/// case; [`ArchGraph::from_features`] accepts arbitrary rows and defers the
/// one-hot check to [`ArchGraph::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ArchGraph {
    num_nodes: usize,
    num_ops: usize,
    features: Vec<f64>,
    edges: Vec<(usize, usize)>,
    bidirectional: bool,
}

impl ArchGraph {
    /// Builds a graph from per-node op indices. The result is not validated.
    pub fn from_ops(num_ops: usize, ops: &[usize], edges: Vec<(usize, usize)>) -> Self {
        let mut features = vec![0.0; ops.len() * num_ops];
        for (node, &op) in ops.iter().enumerate() {
            if op < num_ops {
                features[node * num_ops + op] = 1.0;
            }
        }
        Self {
            num_nodes: ops.len(),
            num_ops,
            features,
            edges,
            bidirectional: false,
        }
    }

    pub fn from_features(
        num_nodes: usize,
        num_ops: usize,
        features: Vec<f64>,
        edges: Vec<(usize, usize)>,
    ) -> Self {
        assert_eq!(features.len(), num_nodes * num_ops, "feature matrix shape");
        Self {
            num_nodes,
            num_ops,
            features,
            edges,
            bidirectional: false,
        }
    }

    /// Builds and validates a graph from op names.
    pub fn from_names(
        vocab: &OpVocabulary,
        ops: &[&str],
        edges: Vec<(usize, usize)>,
    ) -> Result<Self, GraphError> {
        let idx = ops
            .iter()
            .map(|op| vocab.index_of(op))
            .collect::<Result<Vec<_>, _>>()?;
        let g = Self::from_ops(vocab.len(), &idx, edges);
        g.validate()?;
        Ok(g)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_ops(&self) -> usize {
        self.num_ops
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature_row(&self, node: usize) -> &[f64] {
        &self.features[node * self.num_ops..(node + 1) * self.num_ops]
    }

    /// True when produced by [`ArchGraph::undirect`].
    pub fn is_bidirectional(&self) -> bool {
        self.bidirectional
    }

    /// Op index of `node`, assuming a valid one-hot row.
    pub fn op(&self, node: usize) -> usize {
        self.feature_row(node)
            .iter()
            .position(|&v| v == 1.0)
            .expect("validated one-hot row")
    }

    pub fn ops(&self) -> Vec<usize> {
        (0..self.num_nodes).map(|i| self.op(i)).collect()
    }

    /// Checks every structural invariant. Bidirectional graphs skip the
    /// acyclicity check.
    pub fn validate(&self) -> Result<(), GraphError> {
        for node in 0..self.num_nodes {
            let row = self.feature_row(node);
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(GraphError::BadFeatureRow { node });
            }
        }
        let mut seen = BTreeSet::new();
        for &(from, to) in &self.edges {
            if from >= self.num_nodes || to >= self.num_nodes {
                return Err(GraphError::DanglingEdgeIndex {
                    from,
                    to,
                    num_nodes: self.num_nodes,
                });
            }
            if from == to {
                return Err(GraphError::SelfLoop { node: from });
            }
            if !seen.insert((from, to)) {
                return Err(GraphError::DuplicateEdge { from, to });
            }
        }
        if !self.bidirectional {
            self.assign_topological_order()?;
        }
        Ok(())
    }

    fn check_node(&self, node: usize) -> Result<(), GraphError> {
        if node >= self.num_nodes {
            return Err(GraphError::DanglingEdgeIndex {
                from: node,
                to: node,
                num_nodes: self.num_nodes,
            });
        }
        Ok(())
    }

    /// `N(i)`: sources of edges ending at `node`, ascending.
    pub fn in_neighbors(&self, node: usize) -> Result<BTreeSet<usize>, GraphError> {
        self.check_node(node)?;
        Ok(self
            .edges
            .iter()
            .filter(|e| e.1 == node)
            .map(|e| e.0)
            .collect())
    }

    /// `K(i)`: targets of edges leaving `node`, ascending.
    pub fn out_neighbors(&self, node: usize) -> Result<BTreeSet<usize>, GraphError> {
        self.check_node(node)?;
        Ok(self
            .edges
            .iter()
            .filter(|e| e.0 == node)
            .map(|e| e.1)
            .collect())
    }

    /// Adjacency lists `(incoming, outgoing)`, each sorted ascending.
    pub fn adjacency(&self) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let mut incoming = vec![Vec::new(); self.num_nodes];
        let mut outgoing = vec![Vec::new(); self.num_nodes];
        for &(from, to) in &self.edges {
            outgoing[from].push(to);
            incoming[to].push(from);
        }
        for list in incoming.iter_mut().chain(outgoing.iter_mut()) {
            list.sort_unstable();
        }
        (incoming, outgoing)
    }

    /// Level partition by iterative removal of in-degree-0 nodes.
    pub fn assign_topological_order(&self) -> Result<TopoPartition, GraphError> {
        let mut indegree = vec![0usize; self.num_nodes];
        for &(from, to) in &self.edges {
            if from >= self.num_nodes || to >= self.num_nodes {
                return Err(GraphError::DanglingEdgeIndex {
                    from,
                    to,
                    num_nodes: self.num_nodes,
                });
            }
            indegree[to] += 1;
        }
        let (_, outgoing) = self.adjacency();
        let mut levels = Vec::new();
        let mut level_of = vec![usize::MAX; self.num_nodes];
        let mut frontier: Vec<usize> = (0..self.num_nodes).filter(|&i| indegree[i] == 0).collect();
        let mut assigned = 0;
        while !frontier.is_empty() {
            let t = levels.len();
            let mut next = Vec::new();
            for &node in &frontier {
                level_of[node] = t;
                for &succ in &outgoing[node] {
                    indegree[succ] -= 1;
                    if indegree[succ] == 0 {
                        next.push(succ);
                    }
                }
            }
            assigned += frontier.len();
            next.sort_unstable();
            levels.push(std::mem::replace(&mut frontier, next));
        }
        if assigned < self.num_nodes {
            let node = (0..self.num_nodes)
                .find(|&i| level_of[i] == usize::MAX)
                .unwrap_or(0);
            return Err(GraphError::CyclicGraph { node });
        }
        Ok(TopoPartition { levels, level_of })
    }

    /// Adds the reverse of every edge. The result is flagged bidirectional
    /// and is exempt from the acyclicity invariant.
    pub fn undirect(&self) -> ArchGraph {
        let mut set: BTreeSet<(usize, usize)> = self.edges.iter().copied().collect();
        for &(from, to) in &self.edges {
            set.insert((to, from));
        }
        ArchGraph {
            num_nodes: self.num_nodes,
            num_ops: self.num_ops,
            features: self.features.clone(),
            edges: set.into_iter().collect(),
            bidirectional: true,
        }
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> ArchGraph {
        assert_eq!(perm.len(), self.num_nodes, "permutation length");
        let mut features = vec![0.0; self.features.len()];
        for (old, &new) in perm.iter().enumerate() {
            features[new * self.num_ops..(new + 1) * self.num_ops]
                .copy_from_slice(self.feature_row(old));
        }
        ArchGraph {
            num_nodes: self.num_nodes,
            num_ops: self.num_ops,
            features,
            edges: self.edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect(),
            bidirectional: self.bidirectional,
        }
    }

    /// Edge set as a sorted set, for order-insensitive comparisons.
    pub fn edge_set(&self) -> BTreeSet<(usize, usize)> {
        self.edges.iter().copied().collect()
    }
}

/// Disjoint levels `V(1) .. V(T)` of a DAG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopoPartition {
    levels: Vec<Vec<usize>>,
    level_of: Vec<usize>,
}

impl TopoPartition {
    /// Levels in order; node indices within a level are ascending.
    pub fn levels(&self) -> &[Vec<usize>] {
        &self.levels
    }

    /// Number of levels `T`.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Zero-based level of `node`.
    pub fn level_of(&self, node: usize) -> usize {
        self.level_of[node]
    }

    pub fn first(&self) -> &[usize] {
        self.levels.first().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn last(&self) -> &[usize] {
        self.levels.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl fmt::Display for TopoPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (t, level) in self.levels.iter().enumerate() {
            if t > 0 {
                write!(f, " ")?;
            }
            write!(f, "V({})={:?}", t + 1, level)?;
        }
        write!(f, " T={}", self.depth())
    }
}
