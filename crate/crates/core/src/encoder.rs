//! GIN-style architecture encoder with its decoder and prediction heads.
//!
//! Graphs are undirected before message passing. Each layer computes
//! `h' = MLP((1 + ε)·h + Σ_neighbours h)`; node states are mean-pooled into
//! one embedding per graph. The decoder maps embeddings to surrogates, the
//! regressor to performance scores and the proxy head to proxy scores.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::archgraph::{ArchGraph, GraphError};
use crate::diffmath::{BoundParams, Checkpoint, DiffError, Matrix, ParamId, ParamStore, Tape, Var};

#[derive(Debug, thiserror::Error)]
pub enum EncoderError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("graph has {got} op columns, model expects {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub epsilon: f64,
    pub epsilon_learnable: bool,
    /// Hidden widths of the surrogate decoder; empty means one linear map.
    pub decoder_dims: Vec<usize>,
    /// Hidden widths of the regressor and proxy head.
    pub head_dims: Vec<usize>,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            num_layers: 3,
            epsilon: 0.0,
            epsilon_learnable: false,
            decoder_dims: vec![64],
            head_dims: vec![64],
            seed: 97,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.hidden_dim == 0 || self.num_layers == 0 {
            return Err(EncoderError::InvalidConfig(
                "hidden_dim and num_layers must be at least 1".into(),
            ));
        }
        if self.decoder_dims.contains(&0) || self.head_dims.contains(&0) {
            return Err(EncoderError::InvalidConfig("zero-width hidden layer".into()));
        }
        if !self.epsilon.is_finite() {
            return Err(EncoderError::InvalidConfig("epsilon must be finite".into()));
        }
        Ok(())
    }
}

/// Linear layers with ReLU between them, none after the last.
#[derive(Debug, Clone)]
struct Mlp {
    layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    fn build(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        dims: &[usize],
    ) -> Result<Self, DiffError> {
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, w) in dims.windows(2).enumerate() {
            let weight = store.insert(format!("{prefix}.lin{i}.weight"), glorot(rng, w[0], w[1]))?;
            let bias = store.insert(format!("{prefix}.lin{i}.bias"), Matrix::zeros(1, w[1]))?;
            layers.push((weight, bias));
        }
        Ok(Self { layers })
    }

    fn forward(&self, tape: &mut Tape, bound: &BoundParams, x: Var) -> Result<Var, DiffError> {
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            if i > 0 {
                h = tape.relu(h);
            }
            let xw = tape.matmul(h, bound.var(w))?;
            h = tape.add(xw, bound.var(b))?;
        }
        Ok(h)
    }
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("sized buffer")
}

/// A disjoint union of undirected graphs, ready for message passing.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub features: Matrix,
    pub adjacency: Arc<Vec<Vec<usize>>>,
    pub segments: Arc<Vec<(usize, usize)>>,
}

impl GraphBatch {
    pub fn from_graphs<'a>(graphs: impl IntoIterator<Item = &'a ArchGraph>) -> Result<Self, EncoderError> {
        let mut num_ops = None;
        let mut features = Vec::new();
        let mut adjacency = Vec::new();
        let mut segments = Vec::new();
        for g in graphs {
            match num_ops {
                None => num_ops = Some(g.num_ops()),
                Some(o) if o != g.num_ops() => {
                    return Err(EncoderError::ShapeMismatch {
                        expected: o,
                        got: g.num_ops(),
                    })
                }
                _ => {}
            }
            if g.num_nodes() == 0 {
                return Err(EncoderError::InvalidConfig("empty graph".into()));
            }
            let offset = adjacency.len();
            let u = if g.is_bidirectional() { g.clone() } else { g.undirect() };
            let (incoming, _) = u.adjacency();
            adjacency.extend(incoming.into_iter().map(|n| n.into_iter().map(|j| j + offset).collect()));
            features.extend_from_slice(g.features());
            segments.push((offset, offset + g.num_nodes()));
        }
        let cols = num_ops.unwrap_or(0);
        Ok(Self {
            features: Matrix::from_vec(adjacency.len(), cols, features)?,
            adjacency: Arc::new(adjacency),
            segments: Arc::new(segments),
        })
    }

    pub fn num_graphs(&self) -> usize {
        self.segments.len()
    }
}

#[derive(Debug, Clone)]
struct Layer {
    mlp: Mlp,
    epsilon: Option<ParamId>,
}

/// Encoder `θ`, decoder `φ`, regressor `ξ` and proxy head `ρ` in one store.
#[derive(Debug, Clone)]
pub struct EncoderModel {
    config: EncoderConfig,
    num_ops: usize,
    surrogate_dim: usize,
    params: ParamStore,
    layers: Vec<Layer>,
    decoder: Mlp,
    regressor: Mlp,
    proxy_head: Mlp,
}

impl EncoderModel {
    /// Fresh model for graphs over `num_ops` ops and surrogates of length
    /// `surrogate_dim`, initialised from `config.seed`.
    pub fn new(config: EncoderConfig, num_ops: usize, surrogate_dim: usize) -> Result<Self, EncoderError> {
        config.validate()?;
        if num_ops == 0 || surrogate_dim == 0 {
            return Err(EncoderError::InvalidConfig("num_ops and surrogate_dim must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let d = config.hidden_dim;
        let mut layers = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let input = if l == 0 { num_ops } else { d };
            let prefix = format!("encoder.layer{l}");
            let mlp = Mlp::build(&mut params, &mut rng, &prefix, &[input, d, d])?;
            let epsilon = if config.epsilon_learnable {
                Some(params.insert(format!("{prefix}.epsilon"), Matrix::scalar(config.epsilon))?)
            } else {
                None
            };
            layers.push(Layer { mlp, epsilon });
        }
        let dims = |hidden: &[usize], out: usize| {
            let mut v = vec![d];
            v.extend_from_slice(hidden);
            v.push(out);
            v
        };
        let decoder = Mlp::build(&mut params, &mut rng, "decoder", &dims(&config.decoder_dims, surrogate_dim))?;
        let regressor = Mlp::build(&mut params, &mut rng, "regressor", &dims(&config.head_dims, 1))?;
        let proxy_head = Mlp::build(&mut params, &mut rng, "proxy_head", &dims(&config.head_dims, 1))?;
        Ok(Self {
            config,
            num_ops,
            surrogate_dim,
            params,
            layers,
            decoder,
            regressor,
            proxy_head,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn num_ops(&self) -> usize {
        self.num_ops
    }

    pub fn surrogate_dim(&self) -> usize {
        self.surrogate_dim
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Graph embeddings `z`, one row per graph in `batch`.
    pub fn encode(&self, tape: &mut Tape, bound: &BoundParams, batch: &GraphBatch) -> Result<Var, EncoderError> {
        if batch.features.cols() != self.num_ops {
            return Err(EncoderError::ShapeMismatch {
                expected: self.num_ops,
                got: batch.features.cols(),
            });
        }
        let mut h = tape.constant(batch.features.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            if l > 0 {
                h = tape.relu(h);
            }
            let nbr = tape.neighbor_sum(h, batch.adjacency.clone())?;
            let own = match layer.epsilon {
                Some(e) => {
                    let scaled = tape.mul_elem(h, bound.var(e))?;
                    tape.add(h, scaled)?
                }
                None if self.config.epsilon == 0.0 => h,
                None => tape.scalar_mul(h, 1.0 + self.config.epsilon),
            };
            let agg = tape.add(own, nbr)?;
            h = layer.mlp.forward(tape, bound, agg)?;
        }
        Ok(tape.segment_mean(h, batch.segments.clone())?)
    }

    /// Reconstructed surrogates `ŝ`, one row per embedding.
    pub fn decode_surrogate(&self, tape: &mut Tape, bound: &BoundParams, z: Var) -> Result<Var, EncoderError> {
        self.check_embedding(tape, z)?;
        Ok(self.decoder.forward(tape, bound, z)?)
    }

    /// Performance scores `ŷ` as a column vector.
    pub fn predict_performance(&self, tape: &mut Tape, bound: &BoundParams, z: Var) -> Result<Var, EncoderError> {
        self.check_embedding(tape, z)?;
        Ok(self.regressor.forward(tape, bound, z)?)
    }

    /// Proxy scores `ĉ` as a column vector.
    pub fn predict_proxy(&self, tape: &mut Tape, bound: &BoundParams, z: Var) -> Result<Var, EncoderError> {
        self.check_embedding(tape, z)?;
        Ok(self.proxy_head.forward(tape, bound, z)?)
    }

    fn check_embedding(&self, tape: &Tape, z: Var) -> Result<(), EncoderError> {
        let cols = tape.value(z).cols();
        if cols != self.config.hidden_dim {
            return Err(EncoderError::ShapeMismatch {
                expected: self.config.hidden_dim,
                got: cols,
            });
        }
        Ok(())
    }

    /// Embeddings of `graphs` without recording gradients for later use.
    pub fn embed(&self, graphs: &[ArchGraph]) -> Result<Matrix, EncoderError> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let batch = GraphBatch::from_graphs(graphs)?;
        let z = self.encode(&mut tape, &bound, &batch)?;
        Ok(tape.value(z).clone())
    }

    /// Regressor scores for `graphs`.
    pub fn score(&self, graphs: &[ArchGraph]) -> Result<Vec<f64>, EncoderError> {
        if graphs.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let batch = GraphBatch::from_graphs(graphs)?;
        let z = self.encode(&mut tape, &bound, &batch)?;
        let y = self.predict_performance(&mut tape, &bound, z)?;
        Ok(tape.value(y).data().to_vec())
    }

    /// Serializes parameters with the config under `header["encoder"]`.
    /// Entries of `extra` are merged into the header.
    pub fn to_checkpoint(&self, extra: serde_json::Map<String, serde_json::Value>) -> Checkpoint {
        let mut header = extra;
        header.insert(
            "encoder".into(),
            serde_json::json!({
                "config": self.config,
                "num_ops": self.num_ops,
                "surrogate_dim": self.surrogate_dim,
            }),
        );
        Checkpoint::new(serde_json::Value::Object(header), &self.params)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, EncoderError> {
        let enc = ckpt
            .header
            .get("encoder")
            .ok_or_else(|| EncoderError::Checkpoint("missing `encoder` header".into()))?;
        let config: EncoderConfig = serde_json::from_value(enc["config"].clone())
            .map_err(|e| EncoderError::Checkpoint(e.to_string()))?;
        let num = |key: &str| {
            enc[key]
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| EncoderError::Checkpoint(format!("missing `{key}`")))
        };
        let mut model = Self::new(config, num("num_ops")?, num("surrogate_dim")?)?;
        model.params.load_entries(&ckpt.tensors)?;
        Ok(model)
    }
}
