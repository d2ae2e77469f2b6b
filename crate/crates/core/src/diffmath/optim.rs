use serde::{Deserialize, Serialize};

use super::{DiffError, Matrix, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<(), DiffError> {
        let bad = |msg: &str| Err(DiffError::InvalidHyperparameter(msg.to_string()));
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad("lr must be finite and >= 0");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be > 0");
        }
        Ok(())
    }
}

/// Adam with decoupled weight decay.
///
/// For step `t` (1-based) and gradient `g`:
/// `m = b1 m + (1-b1) g`, `v = b2 v + (1-b2) g²`,
/// `p ← p − lr·m̂/(√v̂ + eps) − lr·wd·p`, where the decay term uses the
/// pre-step parameter value.
#[derive(Debug, Clone)]
pub struct AdamW {
    config: AdamWConfig,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &ParamStore) -> Result<Self, DiffError> {
        config.validate()?;
        let zeros = || {
            params
                .iter()
                .map(|(_, m)| Matrix::zeros(m.rows(), m.cols()))
                .collect::<Vec<_>>()
        };
        Ok(Self {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        })
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update. `grads[i]` must match the shape of parameter `i`.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Matrix]) -> Result<(), DiffError> {
        if grads.len() != self.m.len() || params.len() != self.m.len() {
            return Err(DiffError::ShapeMismatch {
                op: "adamw_step",
                left: (params.len(), 0),
                right: (grads.len(), 0),
            });
        }
        self.t += 1;
        let AdamWConfig {
            lr,
            weight_decay,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (i, g) in grads.iter().enumerate() {
            let p = params.value_mut_by_index(i);
            if p.shape() != g.shape() {
                return Err(DiffError::ShapeMismatch {
                    op: "adamw_step",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= lr * mhat / (vhat.sqrt() + eps) + lr * weight_decay * *pv;
            }
        }
        Ok(())
    }
}
