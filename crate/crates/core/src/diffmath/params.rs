use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DiffError, Gradients, Matrix, Tape, Var};

pub const CHECKPOINT_SCHEMA: &str = "fgp-checkpoint/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) -> Result<ParamId, DiffError> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(DiffError::Checkpoint(format!("duplicate parameter `{name}`")));
        }
        self.names.push(name);
        self.values.push(value);
        Ok(ParamId(self.values.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|m| m.data().len()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn value_by_index(&self, i: usize) -> &Matrix {
        &self.values[i]
    }

    pub fn value_mut_by_index(&mut self, i: usize) -> &mut Matrix {
        &mut self.values[i]
    }

    pub fn id(&self, name: &str) -> Result<ParamId, DiffError> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(ParamId)
            .ok_or_else(|| DiffError::UnknownParam(name.to_string()))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Records every parameter on `tape` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        BoundParams {
            vars: self.values.iter().map(|m| tape.param(m.clone())).collect(),
        }
    }

    /// Gradients for every parameter, zero where none flowed.
    pub fn collect_grads(&self, bound: &BoundParams, grads: &mut Gradients) -> Vec<Matrix> {
        bound
            .vars
            .iter()
            .zip(&self.values)
            .map(|(&v, m)| grads.take_or_zeros(v, m.shape()))
            .collect()
    }

    pub fn to_entries(&self) -> BTreeMap<String, TensorEntry> {
        self.iter()
            .map(|(n, m)| {
                (
                    n.to_string(),
                    TensorEntry {
                        shape: [m.rows(), m.cols()],
                        values: m.data().to_vec(),
                    },
                )
            })
            .collect()
    }

    /// Overwrites values from a name map. Every parameter must be present
    /// with a matching shape; extra entries are rejected.
    pub fn load_entries(&mut self, entries: &BTreeMap<String, TensorEntry>) -> Result<(), DiffError> {
        if entries.len() != self.len() {
            return Err(DiffError::Checkpoint(format!(
                "expected {} tensors, found {}",
                self.len(),
                entries.len()
            )));
        }
        for (name, value) in self.names.iter().zip(self.values.iter_mut()) {
            let entry = entries
                .get(name)
                .ok_or_else(|| DiffError::UnknownParam(name.clone()))?;
            if entry.shape != [value.rows(), value.cols()] {
                return Err(DiffError::Checkpoint(format!(
                    "`{name}` has shape {:?}, expected {:?}",
                    entry.shape,
                    value.shape()
                )));
            }
            *value = Matrix::from_vec(entry.shape[0], entry.shape[1], entry.values.clone())?;
        }
        Ok(())
    }
}

/// Tape handles for a [`ParamStore`], index-aligned with it.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

/// One tensor in a checkpoint: row-major values with their shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

/// Versioned JSON checkpoint: a free-form header plus a tensor map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub schema: String,
    pub header: serde_json::Value,
    pub tensors: BTreeMap<String, TensorEntry>,
}

impl Checkpoint {
    pub fn new(header: serde_json::Value, params: &ParamStore) -> Self {
        Self {
            schema: CHECKPOINT_SCHEMA.to_string(),
            header,
            tensors: params.to_entries(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DiffError> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| DiffError::Checkpoint(e.to_string()))?;
        if ck.schema != CHECKPOINT_SCHEMA {
            return Err(DiffError::Checkpoint(format!("unsupported schema `{}`", ck.schema)));
        }
        Ok(ck)
    }
}
