use crate::archgraph::{ArchGraph, GraphError};

/// Relabelings beyond this count are pruned with colour refinement first.
const MAX_RELABELINGS: u64 = 40_320;

/// Labelling-independent form of a DAG: the lexicographically smallest
/// `(op sequence, sorted edge list)` among relabelings that list nodes
/// level by level, ops ascending within a level.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalForm {
    pub ops: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

impl CanonicalForm {
    /// Stable 64-bit FNV-1a digest, usable as a seed.
    pub fn digest(&self) -> u64 {
        let mut h = Fnv::new();
        h.write_u64(self.ops.len() as u64);
        for &op in &self.ops {
            h.write_u64(op as u64);
        }
        for &(a, b) in &self.edges {
            h.write_u64(a as u64);
            h.write_u64(b as u64);
        }
        h.finish()
    }
}

pub(crate) struct Fnv(u64);

impl Fnv {
    pub(crate) fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    pub(crate) fn write_u64(&mut self, v: u64) {
        for byte in v.to_le_bytes() {
            self.0 ^= u64::from(byte);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub(crate) fn finish(&self) -> u64 {
        self.0
    }
}

/// Iterated neighbourhood colours; isomorphism-invariant.
fn refine_colours(graph: &ArchGraph, level_of: &[usize], ops: &[usize]) -> Vec<u64> {
    let (incoming, outgoing) = graph.adjacency();
    let mut colour: Vec<u64> = (0..graph.num_nodes())
        .map(|i| {
            let mut h = Fnv::new();
            h.write_u64(level_of[i] as u64);
            h.write_u64(ops[i] as u64);
            h.finish()
        })
        .collect();
    for _ in 0..graph.num_nodes().min(8) {
        colour = (0..graph.num_nodes())
            .map(|i| {
                let mut ins: Vec<u64> = incoming[i].iter().map(|&j| colour[j]).collect();
                let mut outs: Vec<u64> = outgoing[i].iter().map(|&j| colour[j]).collect();
                ins.sort_unstable();
                outs.sort_unstable();
                let mut h = Fnv::new();
                h.write_u64(colour[i]);
                h.write_u64(ins.len() as u64);
                ins.iter().for_each(|&c| h.write_u64(c));
                h.write_u64(outs.len() as u64);
                outs.iter().for_each(|&c| h.write_u64(c));
                h.finish()
            })
            .collect();
    }
    colour
}

fn group_nodes(keys: &[(usize, usize, u64)]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by_key(|&i| (keys[i], i));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if keys[g[0]] == keys[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

fn relabelings(groups: &[Vec<usize>]) -> u64 {
    groups
        .iter()
        .map(|g| (1..=g.len() as u64).product::<u64>())
        .fold(1u64, |a, b| a.saturating_mul(b))
}

/// Computes the canonical form of a DAG.
pub fn canonical_form(graph: &ArchGraph) -> Result<CanonicalForm, GraphError> {
    let topo = graph.assign_topological_order()?;
    let n = graph.num_nodes();
    let ops = graph.ops();
    let level_of: Vec<usize> = (0..n).map(|i| topo.level_of(i)).collect();

    let mut keys: Vec<(usize, usize, u64)> = (0..n).map(|i| (level_of[i], ops[i], 0)).collect();
    let mut groups = group_nodes(&keys);
    if relabelings(&groups) > MAX_RELABELINGS {
        let colour = refine_colours(graph, &level_of, &ops);
        for (i, key) in keys.iter_mut().enumerate() {
            key.2 = colour[i];
        }
        groups = group_nodes(&keys);
    }

    let canon_ops: Vec<usize> = groups
        .iter()
        .flat_map(|g| std::iter::repeat(ops[g[0]]).take(g.len()))
        .collect();

    let mut best: Option<Vec<(usize, usize)>> = None;
    let mut perm_groups = groups.clone();
    let mut label = vec![0usize; n];
    let mut budget = MAX_RELABELINGS;
    search(graph, &mut perm_groups, 0, &mut label, &mut best, &mut budget);
    Ok(CanonicalForm {
        ops: canon_ops,
        edges: best.unwrap_or_default(),
    })
}

fn search(
    graph: &ArchGraph,
    groups: &mut [Vec<usize>],
    gi: usize,
    label: &mut [usize],
    best: &mut Option<Vec<(usize, usize)>>,
    budget: &mut u64,
) {
    if *budget == 0 {
        return;
    }
    if gi == groups.len() {
        *budget -= 1;
        let mut pos = 0;
        for g in groups.iter() {
            for &node in g {
                label[node] = pos;
                pos += 1;
            }
        }
        let mut edges: Vec<(usize, usize)> =
            graph.edges().iter().map(|&(a, b)| (label[a], label[b])).collect();
        edges.sort_unstable();
        if best.as_ref().is_none_or(|b| edges < *b) {
            *best = Some(edges);
        }
        return;
    }
    permute(graph, groups, gi, 0, label, best, budget);
}

fn permute(
    graph: &ArchGraph,
    groups: &mut [Vec<usize>],
    gi: usize,
    start: usize,
    label: &mut [usize],
    best: &mut Option<Vec<(usize, usize)>>,
    budget: &mut u64,
) {
    let len = groups[gi].len();
    if start + 1 >= len {
        search(graph, groups, gi + 1, label, best, budget);
        return;
    }
    for i in start..len {
        groups[gi].swap(start, i);
        permute(graph, groups, gi, start + 1, label, best, budget);
        groups[gi].swap(start, i);
    }
}
