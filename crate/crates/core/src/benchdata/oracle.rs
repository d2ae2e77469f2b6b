use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::canonical::{canonical_form, Fnv};
use crate::archgraph::{ArchGraph, GraphError, OpVocabulary};

/// Coefficients of the synthetic performance model.
///
/// For a cell with longest input→output path `P` (ties broken by the
/// larger op weight), `D` intermediate nodes on `P` and widest level `W`:
///
/// ```text
/// raw   = Σ_{v∈P} w(v) + off_path · Σ_{v∉P} w(v) + depth_width · D·W − depth_sq · D²
/// clean = 1 / (1 + exp(−(raw − center) / scale))
/// perf  = clean + N(0, noise_std²)
/// proxy = perf  + N(0, proxy_noise_std²)
/// ```
///
/// `clean` lives in (0, 1), so `noise_std = 0.02` is 2% of its range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub seed: u64,
    pub op_weights: BTreeMap<String, f64>,
    pub off_path: f64,
    pub depth_width: f64,
    pub depth_sq: f64,
    pub center: f64,
    pub scale: f64,
    pub noise_std: f64,
    pub proxy_noise_std: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        let op_weights = [
            ("skip_connect", 0.1),
            ("conv1x1", 0.5),
            ("conv3x3", 0.9),
            ("avgpool3x3", 0.2),
            ("maxpool3x3", 0.25),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            seed: 97,
            op_weights,
            off_path: 0.3,
            depth_width: 0.15,
            depth_sq: 0.08,
            center: 1.6,
            scale: 0.6,
            noise_std: 0.02,
            proxy_noise_std: 0.06,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleScore {
    pub noiseless: f64,
    pub performance: f64,
    pub proxy: f64,
}

/// Deterministic stand-in for trained accuracies and zero-cost proxies.
#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    config: OracleConfig,
    weights: Vec<f64>,
}

impl SyntheticOracle {
    /// Ops missing from `op_weights` weigh zero.
    pub fn new(vocab: &OpVocabulary, config: OracleConfig) -> Self {
        let weights = vocab
            .ops()
            .iter()
            .map(|op| config.op_weights.get(op).copied().unwrap_or(0.0))
            .collect();
        Self { config, weights }
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    /// The noise-free score, invariant to node labeling.
    pub fn noiseless(&self, graph: &ArchGraph) -> Result<f64, GraphError> {
        let topo = graph.assign_topological_order()?;
        let (incoming, _) = graph.adjacency();
        let n = graph.num_nodes();
        let w: Vec<f64> = (0..n).map(|v| self.weights[graph.op(v)]).collect();

        // best (length, weight) path ending at each node
        let mut best = vec![(0usize, 0.0f64); n];
        for level in topo.levels() {
            for &v in level {
                let mut b = (0usize, 0.0f64);
                for &u in &incoming[v] {
                    let cand = (best[u].0 + 1, best[u].1);
                    if cand.0 > b.0 || (cand.0 == b.0 && cand.1 > b.1) {
                        b = cand;
                    }
                }
                best[v] = (b.0, b.1 + w[v]);
            }
        }
        let (path_len, path_weight) = topo
            .last()
            .iter()
            .map(|&v| best[v])
            .fold((0usize, f64::NEG_INFINITY), |a, b| {
                if b.0 > a.0 || (b.0 == a.0 && b.1 > a.1) {
                    b
                } else {
                    a
                }
            });
        let depth = path_len.saturating_sub(1) as f64;
        let width = topo.levels().iter().map(Vec::len).max().unwrap_or(0) as f64;
        let off_path = w.iter().sum::<f64>() - path_weight;

        let c = &self.config;
        let raw = path_weight + c.off_path * off_path + c.depth_width * depth * width
            - c.depth_sq * depth * depth;
        Ok(1.0 / (1.0 + (-(raw - c.center) / c.scale).exp()))
    }

    pub fn score(&self, graph: &ArchGraph) -> Result<OracleScore, GraphError> {
        let noiseless = self.noiseless(graph)?;
        let mut h = Fnv::new();
        h.write_u64(canonical_form(graph)?.digest());
        h.write_u64(self.config.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
        let e1: f64 = StandardNormal.sample(&mut rng);
        let e2: f64 = StandardNormal.sample(&mut rng);
        let performance = noiseless + self.config.noise_std * e1;
        Ok(OracleScore {
            noiseless,
            performance,
            proxy: performance + self.config.proxy_noise_std * e2,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchdata::space::SpaceSpec;

    fn oracle(cfg: OracleConfig) -> (SpaceSpec, SyntheticOracle) {
        let spec = SpaceSpec::cell201_like();
        let o = SyntheticOracle::new(&spec.vocab(), cfg);
        (spec, o)
    }

    #[test]
    fn chain_by_hand() {
        let mut cfg = OracleConfig::default();
        cfg.center = 0.0;
        cfg.scale = 1.0;
        let (spec, o) = oracle(cfg.clone());
        // input → conv3x3 → conv1x1 → output, plus a skip branch off the path
        let g = ArchGraph::from_names(
            &spec.vocab(),
            &["input", "conv3x3", "conv1x1", "skip_connect", "output"],
            vec![(0, 1), (1, 2), (2, 4), (0, 3), (3, 4)],
        )
        .unwrap();
        // levels {0}, {1,3}, {2}, {4}: D = 2, W = 2
        let raw = 0.9 + 0.5 + cfg.off_path * 0.1 + cfg.depth_width * 4.0 - cfg.depth_sq * 4.0;
        let want = 1.0 / (1.0 + (-raw).exp());
        assert!((o.noiseless(&g).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn isomorphic_graphs_score_identically() {
        let (spec, o) = oracle(OracleConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let g = spec.sample(&mut rng);
            let perm: Vec<usize> = (0..g.num_nodes()).map(|i| (i * 3 + 1) % g.num_nodes()).collect();
            let p = if perm.iter().collect::<std::collections::BTreeSet<_>>().len() == g.num_nodes() {
                g.permuted(&perm)
            } else {
                g.permuted(&(0..g.num_nodes()).rev().collect::<Vec<_>>())
            };
            assert_eq!(o.score(&g).unwrap(), o.score(&p).unwrap());
        }
    }

    #[test]
    fn zero_noise_proxy_equals_performance() {
        let cfg = OracleConfig {
            noise_std: 0.0,
            proxy_noise_std: 0.0,
            ..OracleConfig::default()
        };
        let (spec, o) = oracle(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let s = o.score(&spec.sample(&mut rng)).unwrap();
            assert_eq!(s.proxy, s.performance);
            assert_eq!(s.performance, s.noiseless);
        }
    }

    #[test]
    fn seed_changes_noise_only() {
        let (spec, a) = oracle(OracleConfig::default());
        let (_, b) = oracle(OracleConfig {
            seed: 1,
            ..OracleConfig::default()
        });
        let g = spec.sample(&mut ChaCha8Rng::seed_from_u64(0));
        let (sa, sb) = (a.score(&g).unwrap(), b.score(&g).unwrap());
        assert_eq!(sa.noiseless, sb.noiseless);
        assert_ne!(sa.performance, sb.performance);
    }
}
