use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::archgraph::{ArchGraph, GraphError, OpVocabulary};

pub const INPUT_OP: &str = "input";
pub const OUTPUT_OP: &str = "output";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceFamily {
    Cell201Like,
    Cell101Like,
}

/// Shape constraints of a cell search space.
///
/// Node `0` is the input, the last node is the output and every other node
/// carries one of `ops`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub family: SpaceFamily,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub max_edges: usize,
    pub ops: Vec<String>,
    /// Probability of each optional forward edge.
    pub edge_prob: f64,
}

impl SpaceSpec {
    pub fn cell201_like() -> Self {
        Self {
            family: SpaceFamily::Cell201Like,
            min_nodes: 3,
            max_nodes: 8,
            max_edges: 12,
            ops: ["skip_connect", "conv1x1", "conv3x3", "avgpool3x3"].map(String::from).to_vec(),
            edge_prob: 0.25,
        }
    }

    pub fn cell101_like() -> Self {
        Self {
            family: SpaceFamily::Cell101Like,
            min_nodes: 3,
            max_nodes: 7,
            max_edges: 9,
            ops: ["conv3x3", "conv1x1", "maxpool3x3"].map(String::from).to_vec(),
            edge_prob: 0.3,
        }
    }

    pub fn for_family(family: SpaceFamily) -> Self {
        match family {
            SpaceFamily::Cell201Like => Self::cell201_like(),
            SpaceFamily::Cell101Like => Self::cell101_like(),
        }
    }

    /// `input`, `output`, then the intermediate ops.
    pub fn vocab(&self) -> OpVocabulary {
        OpVocabulary::new(
            [INPUT_OP.to_string(), OUTPUT_OP.to_string()]
                .into_iter()
                .chain(self.ops.iter().cloned()),
        )
        .expect("space ops are distinct from input/output")
    }

    pub fn check(&self) -> Result<(), GraphError> {
        let bad = |m: &str| Err(GraphError::BadVocabulary(m.to_string()));
        if self.ops.is_empty() {
            return bad("space needs at least one intermediate op");
        }
        if self.min_nodes < 2 || self.min_nodes > self.max_nodes {
            return bad("node bounds must satisfy 2 <= min <= max");
        }
        // a chain is the sparsest member
        if self.max_edges < self.min_nodes - 1 {
            return bad("max_edges too small for min_nodes");
        }
        if !(0.0..=1.0).contains(&self.edge_prob) {
            return bad("edge_prob outside [0, 1]");
        }
        OpVocabulary::new(
            [INPUT_OP, OUTPUT_OP]
                .iter()
                .map(|s| s.to_string())
                .chain(self.ops.iter().cloned()),
        )?;
        Ok(())
    }

    /// Draws one graph. Every intermediate node gets an earlier predecessor
    /// and a later successor, so all nodes lie on an input→output path.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ArchGraph {
        let num_ops = self.ops.len() + 2;
        loop {
            let n = rng.random_range(self.min_nodes..=self.max_nodes);
            let mut ops = vec![0usize; n];
            ops[n - 1] = 1;
            for op in ops.iter_mut().take(n - 1).skip(1) {
                *op = 2 + rng.random_range(0..self.ops.len());
            }
            let mut adj = vec![vec![false; n]; n];
            if n == 2 {
                adj[0][1] = true;
            }
            for i in 1..n - 1 {
                adj[rng.random_range(0..i)][i] = true;
                adj[i][rng.random_range(i + 1..n)] = true;
            }
            for i in 0..n {
                for j in i + 1..n {
                    if !adj[i][j] && rng.random_bool(self.edge_prob) {
                        adj[i][j] = true;
                    }
                }
            }
            let edges: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|&(i, j)| adj[i][j])
                .collect();
            if edges.len() <= self.max_edges {
                return ArchGraph::from_ops(num_ops, &ops, edges);
            }
        }
    }

    /// True when `graph` is a valid member of this space under any labeling.
    pub fn contains(&self, graph: &ArchGraph) -> bool {
        let n = graph.num_nodes();
        if graph.num_ops() != self.ops.len() + 2
            || n < self.min_nodes
            || n > self.max_nodes
            || graph.edges().len() > self.max_edges
            || graph.is_bidirectional()
            || graph.validate().is_err()
        {
            return false;
        }
        let (incoming, outgoing) = graph.adjacency();
        let mut inputs = 0;
        let mut outputs = 0;
        for node in 0..n {
            match graph.op(node) {
                0 if incoming[node].is_empty() => inputs += 1,
                1 if outgoing[node].is_empty() => outputs += 1,
                0 | 1 => return false,
                _ if incoming[node].is_empty() || outgoing[node].is_empty() => return false,
                _ => {}
            }
        }
        // one source and one sink in a DAG put every node on a source→sink path
        inputs == 1 && outputs == 1
    }
}

impl Default for SpaceSpec {
    fn default() -> Self {
        Self::cell201_like()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_are_members() {
        for spec in [SpaceSpec::cell201_like(), SpaceSpec::cell101_like()] {
            spec.check().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for _ in 0..500 {
                let g = spec.sample(&mut rng);
                assert!(spec.contains(&g), "{g:?}");
            }
        }
    }

    #[test]
    fn membership_survives_relabeling() {
        let spec = SpaceSpec::cell201_like();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = spec.sample(&mut rng);
        let perm: Vec<usize> = (0..g.num_nodes()).rev().collect();
        assert!(spec.contains(&g.permuted(&perm)));
    }

    #[test]
    fn rejects_dead_ends() {
        let spec = SpaceSpec::cell201_like();
        // node 2 has no successor
        let g = ArchGraph::from_ops(6, &[0, 2, 3, 1], vec![(0, 1), (0, 2), (1, 3)]);
        assert!(!spec.contains(&g));
        let ok = ArchGraph::from_ops(6, &[0, 2, 3, 1], vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
        assert!(spec.contains(&ok));
    }

    #[test]
    fn bad_bounds_rejected() {
        let mut spec = SpaceSpec::cell101_like();
        spec.min_nodes = 9;
        assert!(spec.check().is_err());
    }
}
