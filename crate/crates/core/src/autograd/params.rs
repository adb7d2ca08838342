use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Gradients, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    ConvWeight,
    ConvBias,
    DenseWeight,
    DenseBias,
    /// Normalized fast-time frequencies, kept in `[0, 1)`.
    CfelFast,
    /// Normalized slow-time frequencies, kept in `[0, 1)`.
    CfelSlow,
    Other,
}

impl ParamKind {
    pub fn is_conv(self) -> bool {
        matches!(self, ParamKind::ConvWeight | ParamKind::ConvBias)
    }

    pub fn is_frequency(self) -> bool {
        matches!(self, ParamKind::CfelFast | ParamKind::CfelSlow)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub id: String,
    pub layer: String,
    pub kind: ParamKind,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Named parameters in insertion order with gradient buffers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn insert(&mut self, id: &str, layer: &str, kind: ParamKind, value: Tensor) -> Result<usize> {
        if self.index.contains_key(id) {
            return Err(Error::InvalidConfig(format!("duplicate parameter id {id}")));
        }
        let i = self.params.len();
        self.params.push(Param {
            id: id.to_string(),
            layer: layer.to_string(),
            kind,
            grad: Tensor::zeros(value.shape()),
            value,
        });
        self.index.insert(id.to_string(), i);
        Ok(i)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, i: usize) -> &Param {
        &self.params[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn value(&self, i: usize) -> &Tensor {
        &self.params[i].value
    }

    pub fn value_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.params[i].value
    }

    pub fn grad(&self, i: usize) -> &Tensor {
        &self.params[i].grad
    }

    /// Total scalar count.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    pub fn accumulate(&mut self, g: &Gradients) {
        for (&i, t) in &g.by_param {
            self.params[i].grad.add_assign(t);
        }
    }

    /// Rounds every value to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for p in &mut self.params {
            p.value.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }

    /// Wraps normalized frequencies into `[0, 1)`.
    pub fn wrap_frequencies(&mut self) {
        for p in self.params.iter_mut().filter(|p| p.kind.is_frequency()) {
            p.value.data_mut().iter_mut().for_each(|v| {
                *v = v.rem_euclid(1.0);
                if *v >= 1.0 {
                    *v = 0.0;
                }
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    pub t: u64,
}

/// One Adam update from the gradients held in `store`.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if let Some(p) = store.iter().find(|p| p.grad.data().iter().any(|g| !g.is_finite())) {
        return Err(Error::NonFinite(format!("gradient of parameter {}", p.id)));
    }
    if state.m.is_empty() {
        state.m = store.iter().map(|p| vec![0.0; p.value.len()]).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != store.len() || store.iter().zip(&state.m).any(|(p, m)| p.value.len() != m.len()) {
        return Err(Error::shape("adam_step", "optimizer state does not match parameters"));
    }
    state.t += 1;
    let b1t = 1.0 - cfg.beta1.powi(state.t as i32);
    let b2t = 1.0 - cfg.beta2.powi(state.t as i32);
    for (i, p) in store.params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let g = p.grad.data();
        for (k, w) in p.value.data_mut().iter_mut().enumerate() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            let mh = m[k] / b1t;
            let vh = v[k] / b2t;
            *w -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
