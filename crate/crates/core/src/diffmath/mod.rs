//! Minimal reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records each operation with its inputs; [`Tape::backward`]
//! walks the record in reverse and returns [`Gradients`] for every value.
//! Trainable tensors live in a [`ParamStore`] and are updated by [`AdamW`].
//!
//! ```
//! use fgp::diffmath::{Matrix, Tape};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Matrix::scalar(3.0));
//! let y = tape.square(x);
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.get(x).unwrap().item(), 6.0);
//! ```

mod matrix;
mod optim;
mod params;
mod tape;

pub use matrix::Matrix;
pub use optim::{AdamW, AdamWConfig};
pub use params::{BoundParams, Checkpoint, ParamId, ParamStore, TensorEntry, CHECKPOINT_SCHEMA};
pub use tape::{Gradients, Tape, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("backward requires a 1x1 loss, got {shape:?}")]
    NotScalarLoss { shape: (usize, usize) },
    #[error("tape already backpropagated; reset before reuse")]
    AlreadyBackpropagated,
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
