//! Reference implementations shared by the integration tests. They avoid
//! the library's own traversal code and use plain loops throughout.
#![allow(dead_code)]

use fgp::archgraph::ArchGraph;
use fgp::surrogate::SurrogateParams;

/// Level of every node: one plus the longest path reaching it from a node
/// without predecessors.
pub fn levels_by_longest_path(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    fn visit(v: usize, edges: &[(usize, usize)], memo: &mut [Option<usize>]) -> usize {
        if let Some(l) = memo[v] {
            return l;
        }
        let l = edges
            .iter()
            .filter(|e| e.1 == v)
            .map(|e| visit(e.0, edges, memo) + 1)
            .max()
            .unwrap_or(1);
        memo[v] = Some(l);
        l
    }
    let mut memo = vec![None; n];
    (0..n).map(|v| visit(v, edges, &mut memo)).collect()
}

/// Groups nodes by level, ascending within each level.
pub fn level_sets(levels: &[usize]) -> Vec<Vec<usize>> {
    let depth = levels.iter().copied().max().unwrap_or(0);
    (1..=depth)
        .map(|t| (0..levels.len()).filter(|&v| levels[v] == t).collect())
        .collect()
}

/// Per-node scalar-loop surrogate computation with sum pooling.
/// Returns the forward messages, backward messages and the surrogate.
pub fn reference_surrogate(
    graph: &ArchGraph,
    params: &SurrogateParams,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
    let n = graph.num_nodes();
    let k = params.k();
    let alpha = params.alpha();
    let edges = graph.edges();
    let levels = levels_by_longest_path(n, edges);
    let depth = levels.iter().copied().max().unwrap_or(0);
    let p = params.projection();
    let w = params.message();

    let embed = |v: usize| -> Vec<f64> {
        let x = graph.feature_row(v);
        (0..k)
            .map(|c| (0..x.len()).map(|o| x[o] * p.get(o, c)).sum())
            .collect()
    };
    let convert = |m: &[f64], h: &[f64]| -> Vec<f64> {
        (0..k)
            .map(|c| {
                let mut z = 0.0;
                for a in 0..k {
                    z += h[a] * w.get(a, c);
                }
                for a in 0..k {
                    z += m[a] * w.get(k + a, c);
                }
                alpha * m[c] + (1.0 - alpha) * z.max(0.0)
            })
            .collect()
    };

    let mut fp = vec![vec![0.0; k]; n];
    for t in 1..=depth {
        for v in (0..n).filter(|&v| levels[v] == t) {
            if t == 1 {
                fp[v] = params.init_message().to_vec();
                continue;
            }
            let mut m = vec![0.0; k];
            for &(a, b) in edges {
                if b == v {
                    for c in 0..k {
                        m[c] += fp[a][c];
                    }
                }
            }
            fp[v] = convert(&m, &embed(v));
        }
    }
    let mut bp = vec![vec![0.0; k]; n];
    for t in (1..=depth).rev() {
        for v in (0..n).filter(|&v| levels[v] == t) {
            if t == depth {
                bp[v] = fp[v].clone();
                continue;
            }
            let mut m = vec![0.0; k];
            for &(a, b) in edges {
                if a == v {
                    for c in 0..k {
                        m[c] += bp[b][c];
                    }
                }
            }
            bp[v] = convert(&m, &embed(v));
        }
    }
    let mut s = vec![0.0; k];
    for v in (0..n).filter(|&v| levels[v] == 1) {
        for c in 0..k {
            s[c] += bp[v][c];
        }
    }
    (fp, bp, s)
}

/// Round-trip path count used when conversion is the identity: every
/// last-level node `t` returns `N(t)` copies of the message it received
/// through `N(t)` paths, so the surrogate is `r · Σ_t N(t)²`, where `N(t)`
/// counts paths from first-level nodes to `t`.
pub fn round_trip_paths(n: usize, edges: &[(usize, usize)]) -> u128 {
    let levels = levels_by_longest_path(n, edges);
    let depth = levels.iter().copied().max().unwrap_or(0);
    let mut into = vec![0u128; n];
    for t in 1..=depth {
        for v in (0..n).filter(|&v| levels[v] == t) {
            into[v] = if t == 1 {
                1
            } else {
                edges.iter().filter(|e| e.1 == v).map(|e| into[e.0]).sum()
            };
        }
    }
    (0..n).filter(|&v| levels[v] == depth).map(|v| into[v] * into[v]).sum()
}

/// Every DAG on `n` labelled nodes whose edges go from lower to higher
/// index, in bitmask order.
pub fn forward_dags(n: usize) -> Vec<Vec<(usize, usize)>> {
    let slots: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    (0u64..1 << slots.len())
        .map(|mask| {
            slots
                .iter()
                .enumerate()
                .filter(|(b, _)| mask >> b & 1 == 1)
                .map(|(_, &e)| e)
                .collect()
        })
        .collect()
}

/// Tau-b from all `n(n−1)/2` pairs.
pub fn tau_all_pairs(x: &[f64], y: &[f64]) -> f64 {
    let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let a = (x[i] - x[j]).signum() * if x[i] == x[j] { 0.0 } else { 1.0 };
            let b = (y[i] - y[j]).signum() * if y[i] == y[j] { 0.0 } else { 1.0 };
            match (a == 0.0, b == 0.0) {
                (true, true) => {}
                (true, false) => tx += 1,
                (false, true) => ty += 1,
                (false, false) if a == b => c += 1,
                _ => d += 1,
            }
        }
    }
    let n0 = c + d;
    (c - d) as f64 / (((n0 + tx) as f64) * ((n0 + ty) as f64)).sqrt()
}

/// Set-intersection precision with ties broken towards the lower index.
pub fn precision_by_sets(truth: &[f64], pred: &[f64], percent: f64) -> f64 {
    let n = truth.len();
    let k = ((percent * n as f64 / 100.0) - 1e-9).ceil().max(1.0) as usize;
    let top = |v: &[f64]| -> std::collections::BTreeSet<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        // selection by repeated maximum
        let mut out = std::collections::BTreeSet::new();
        for _ in 0..k.min(n) {
            let mut best: Option<usize> = None;
            for &i in &idx {
                if best.is_none_or(|b| v[i] > v[b]) {
                    best = Some(i);
                }
            }
            let b = best.unwrap();
            out.insert(b);
            idx.retain(|&i| i != b);
        }
        out
    };
    let (a, b) = (top(truth), top(pred));
    a.intersection(&b).count() as f64 / k as f64
}
