//! Flow-based generative pre-training for neural architecture encoders.
//!
//! An architecture is a DAG of operations ([`archgraph`]). A seeded
//! forward and backward propagation of random messages turns it into a
//! short vector, its flow surrogate ([`surrogate`]). A GIN-style encoder
//! ([`encoder`]) is pre-trained to reconstruct surrogates and rank proxy
//! scores, then fine-tuned on a few labeled architectures ([`training`]).
//! [`evalmetrics`] scores rankings, [`benchdata`] provides a synthetic
//! benchmark and [`nassearch`] runs predictor-guided search on it.

pub mod archgraph;
pub mod benchdata;
pub mod cli;
pub mod diffmath;
pub mod encoder;
pub mod evalmetrics;
pub mod nassearch;
pub mod surrogate;
pub mod training;

use std::path::PathBuf;

/// Any failure surfaced by the pipeline, categorized for exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Graph(#[from] archgraph::GraphError),
    #[error(transparent)]
    Surrogate(#[from] surrogate::SurrogateError),
    #[error(transparent)]
    Batch(#[from] surrogate::BatchError),
    #[error(transparent)]
    Diff(#[from] diffmath::DiffError),
    #[error(transparent)]
    Encoder(#[from] encoder::EncoderError),
    #[error(transparent)]
    Train(#[from] training::TrainError),
    #[error(transparent)]
    Metric(#[from] evalmetrics::MetricError),
    #[error(transparent)]
    Bench(#[from] benchdata::BenchError),
    #[error(transparent)]
    Search(#[from] nassearch::SearchError),
}

impl Error {
    /// `2` for configuration problems, `3` for I/O, `4` for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io { .. } => 3,
            Error::Bench(benchdata::BenchError::Io(_)) => 3,
            _ => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
