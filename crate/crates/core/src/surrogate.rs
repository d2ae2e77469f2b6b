//! Flow surrogates: a fixed random simulation of an architecture's forward
//! pass and backpropagation.
//!
//! Every order-1 node starts with the shared message `r`. Messages travel
//! level by level along the edges; at each receiving node the pooled input
//! `m` is converted with the node's op embedding `h` as
//!
//! ```text
//! f = α·m + (1 − α)·ReLU([h ∥ m]·W)
//! ```
//!
//! The backward sweep starts from the last level (seeded with the forward
//! messages there), travels against the edges with the same conversion, and
//! the surrogate is the sum of the resulting messages at the order-1 nodes.
//!
//! Pooled inputs are accumulated over neighbour messages sorted by value,
//! so the result does not depend on how nodes are numbered.

use std::cmp::Ordering;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archgraph::{ArchGraph, GraphError, TopoPartition};
use crate::diffmath::Matrix;

/// Messages whose magnitude exceeds this abort the computation.
pub const OVERFLOW_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SurrogateError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("graph has {graph} op columns but the surrogate parameters expect {params}")]
    ShapeMismatch { graph: usize, params: usize },
    #[error("message magnitude exceeded {OVERFLOW_LIMIT:e} at node {node}")]
    NumericOverflow { node: usize },
}

/// Failures from [`batch_surrogates`], keyed by input position.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{} of the graphs failed; first at index {}: {}", failures.len(), failures[0].0, failures[0].1)]
pub struct BatchError {
    pub failures: Vec<(usize, SurrogateError)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Sum,
    Mean,
    Max,
}

/// Hyperparameters from which [`SurrogateParams`] are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    pub k: usize,
    pub sigma: f64,
    pub alpha: f64,
    pub seed: u64,
    pub aggregation: Aggregation,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            k: 8,
            sigma: 0.1,
            alpha: 0.5,
            seed: 97,
            aggregation: Aggregation::Sum,
        }
    }
}

/// The shared random apparatus `(P, W, r)` plus `α`, fixed per experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateParams {
    projection: Matrix,
    message: Matrix,
    init: Vec<f64>,
    config: SurrogateConfig,
}

impl SurrogateParams {
    /// Draws `P` (`num_ops x k`) then `W` (`2k x k`), both row-major from
    /// `N(0, σ²)`, then `r` from `U(0, 1)`, all from one ChaCha8 stream
    /// seeded with `config.seed`.
    pub fn init(num_ops: usize, config: SurrogateConfig) -> Result<Self, SurrogateError> {
        let bad = |m: &str| Err(SurrogateError::InvalidHyperparameter(m.to_string()));
        if config.k == 0 {
            return bad("k must be >= 1");
        }
        if !(config.sigma.is_finite() && config.sigma > 0.0) {
            return bad("sigma must be finite and > 0");
        }
        if !(0.0..=1.0).contains(&config.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if num_ops == 0 {
            return bad("vocabulary is empty");
        }
        let k = config.k;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, config.sigma).expect("sigma validated");
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| normal.sample(&mut rng)).collect() };
        let projection = Matrix::from_vec(num_ops, k, draw(num_ops * k)).expect("shape");
        let message = Matrix::from_vec(2 * k, k, draw(2 * k * k)).expect("shape");
        let init = (0..k).map(|_| rng.random::<f64>()).collect();
        Ok(Self {
            projection,
            message,
            init,
            config,
        })
    }

    /// Builds parameters from explicit matrices, for tests and ablations.
    pub fn from_parts(
        projection: Matrix,
        message: Matrix,
        init: Vec<f64>,
        config: SurrogateConfig,
    ) -> Result<Self, SurrogateError> {
        let k = config.k;
        if projection.cols() != k || message.shape() != (2 * k, k) || init.len() != k {
            return Err(SurrogateError::InvalidHyperparameter(
                "parameter shapes disagree with k".into(),
            ));
        }
        if !(0.0..=1.0).contains(&config.alpha) {
            return Err(SurrogateError::InvalidHyperparameter("alpha must lie in [0, 1]".into()));
        }
        Ok(Self {
            projection,
            message,
            init,
            config,
        })
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn alpha(&self) -> f64 {
        self.config.alpha
    }

    pub fn config(&self) -> &SurrogateConfig {
        &self.config
    }

    pub fn num_ops(&self) -> usize {
        self.projection.rows()
    }

    /// `P`, shape `num_ops x k`.
    pub fn projection(&self) -> &Matrix {
        &self.projection
    }

    /// `W`, shape `2k x k`.
    pub fn message(&self) -> &Matrix {
        &self.message
    }

    /// `r`, the message assigned to every order-1 node.
    pub fn init_message(&self) -> &[f64] {
        &self.init
    }

    /// `f = α·m + (1 − α)·ReLU([h ∥ m]·W)`.
    pub fn convert(&self, pooled: &[f64], h: &[f64]) -> Vec<f64> {
        let k = self.k();
        let alpha = self.alpha();
        let w = &self.message;
        let mut proj = vec![0.0; k];
        for (a, &hv) in h.iter().enumerate() {
            for (p, &wv) in proj.iter_mut().zip(w.row(a)) {
                *p += hv * wv;
            }
        }
        for (a, &mv) in pooled.iter().enumerate() {
            for (p, &wv) in proj.iter_mut().zip(w.row(k + a)) {
                *p += mv * wv;
            }
        }
        pooled
            .iter()
            .zip(proj)
            .map(|(&m, p)| alpha * m + (1.0 - alpha) * p.max(0.0))
            .collect()
    }
}

/// A flow surrogate `s ∈ R^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlowSurrogate(pub Vec<f64>);

impl FlowSurrogate {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-node forward (`fp`) and backward (`bp`) messages.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageState {
    pub fp: Vec<Vec<f64>>,
    pub bp: Vec<Vec<f64>>,
}

/// `H = X·P`; row `i` is the op embedding of node `i`.
pub fn node_embeddings(graph: &ArchGraph, params: &SurrogateParams) -> Result<Matrix, SurrogateError> {
    if graph.num_ops() != params.num_ops() {
        return Err(SurrogateError::ShapeMismatch {
            graph: graph.num_ops(),
            params: params.num_ops(),
        });
    }
    let x = Matrix::from_vec(graph.num_nodes(), graph.num_ops(), graph.features().to_vec())
        .expect("feature shape");
    Ok(x.matmul(params.projection()).expect("inner dimensions agree"))
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn pool(messages: &[Vec<f64>], sources: &[usize], k: usize, aggregation: Aggregation) -> Vec<f64> {
    let mut incoming: Vec<&[f64]> = sources.iter().map(|&j| messages[j].as_slice()).collect();
    incoming.sort_by(|a, b| lex_cmp(a, b));
    let mut out = vec![0.0; k];
    if incoming.is_empty() {
        return out;
    }
    match aggregation {
        Aggregation::Sum | Aggregation::Mean => {
            for msg in &incoming {
                for (o, v) in out.iter_mut().zip(msg.iter()) {
                    *o += v;
                }
            }
            if aggregation == Aggregation::Mean {
                let n = incoming.len() as f64;
                out.iter_mut().for_each(|o| *o /= n);
            }
        }
        Aggregation::Max => {
            out.copy_from_slice(incoming[0]);
            for msg in &incoming[1..] {
                for (o, &v) in out.iter_mut().zip(msg.iter()) {
                    *o = o.max(v);
                }
            }
        }
    }
    out
}

fn guard(msg: &[f64], node: usize) -> Result<(), SurrogateError> {
    if msg.iter().all(|v| v.is_finite() && v.abs() <= OVERFLOW_LIMIT) {
        Ok(())
    } else {
        Err(SurrogateError::NumericOverflow { node })
    }
}

/// Forward sweep over levels `1..=T`. Order-1 nodes hold `r` unconverted.
pub fn forward_pass(
    graph: &ArchGraph,
    topo: &TopoPartition,
    params: &SurrogateParams,
    embeddings: &Matrix,
) -> Result<MessageState, SurrogateError> {
    let k = params.k();
    let (incoming, _) = graph.adjacency();
    let mut fp = vec![Vec::new(); graph.num_nodes()];
    for &node in topo.first() {
        fp[node] = params.init_message().to_vec();
    }
    for level in topo.levels().iter().skip(1) {
        for &node in level {
            let pooled = pool(&fp, &incoming[node], k, params.config.aggregation);
            let f = params.convert(&pooled, embeddings.row(node));
            guard(&f, node)?;
            fp[node] = f;
        }
    }
    Ok(MessageState {
        fp,
        bp: vec![Vec::new(); graph.num_nodes()],
    })
}

/// Backward sweep over levels `T..=1`. Order-T nodes take their forward
/// message unconverted; every earlier node pools its successors' messages
/// (a zero vector when it has none) and converts.
pub fn backward_pass(
    graph: &ArchGraph,
    topo: &TopoPartition,
    params: &SurrogateParams,
    embeddings: &Matrix,
    mut state: MessageState,
) -> Result<MessageState, SurrogateError> {
    let k = params.k();
    let (_, outgoing) = graph.adjacency();
    for &node in topo.last() {
        state.bp[node] = state.fp[node].clone();
    }
    let depth = topo.depth();
    for level in topo.levels().iter().take(depth.saturating_sub(1)).rev() {
        for &node in level {
            let pooled = pool(&state.bp, &outgoing[node], k, params.config.aggregation);
            let b = params.convert(&pooled, embeddings.row(node));
            guard(&b, node)?;
            state.bp[node] = b;
        }
    }
    Ok(state)
}

/// Full pipeline: order assignment, both sweeps, then `s = Σ_{V(1)} b_i`.
pub fn compute_surrogate(
    graph: &ArchGraph,
    params: &SurrogateParams,
) -> Result<FlowSurrogate, SurrogateError> {
    let topo = graph.assign_topological_order()?;
    let embeddings = node_embeddings(graph, params)?;
    let state = forward_pass(graph, &topo, params, &embeddings)?;
    let state = backward_pass(graph, &topo, params, &embeddings, state)?;
    let s = pool(&state.bp, topo.first(), params.k(), Aggregation::Sum);
    guard(&s, topo.first().first().copied().unwrap_or(0))?;
    Ok(FlowSurrogate(s))
}

/// Maps [`compute_surrogate`] over `graphs` on the rayon pool.
pub fn batch_surrogates(
    graphs: &[ArchGraph],
    params: &SurrogateParams,
) -> Result<Vec<FlowSurrogate>, BatchError> {
    let results: Vec<_> = graphs
        .par_iter()
        .map(|g| compute_surrogate(g, params))
        .collect();
    let mut out = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => out.push(s),
            Err(e) => failures.push((i, e)),
        }
    }
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(BatchError { failures })
    }
}

/// Writes `id,s0,..,s{k-1}` rows after a `# ` comment header line.
pub fn write_surrogates_csv<W: Write>(
    mut out: W,
    header: &str,
    rows: &[(String, FlowSurrogate)],
) -> std::io::Result<()> {
    writeln!(out, "# {header}")?;
    let k = rows.first().map_or(0, |r| r.1.len());
    let mut wtr = csv::Writer::from_writer(out);
    let mut head = vec!["id".to_string()];
    head.extend((0..k).map(|i| format!("s{i}")));
    wtr.write_record(&head)?;
    for (id, s) in rows {
        let mut rec = vec![id.clone()];
        rec.extend(s.values().iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()
}
