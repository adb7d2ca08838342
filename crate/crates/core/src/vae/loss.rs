use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            alpha: 0.25,
            beta: 1e-4,
            theta: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.gamma, self.alpha, self.beta, self.theta];
        if all.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("loss weights must be finite and >= 0: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub focal: f64,
    pub kl: f64,
    pub da: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// `focal + beta * da + theta * kl`.
    pub fn compose(focal: f64, kl: f64, da: f64, lw: &LossWeights) -> Self {
        Self {
            focal,
            kl,
            da,
            total: focal + lw.beta * da + lw.theta * kl,
        }
    }
}

/// Per-pixel focal loss and its derivative in `p`.
fn focal_pixel(p: f64, y: bool, gamma: f64, alpha: f64) -> (f64, f64) {
    let inside = p > PROB_EPS && p < 1.0 - PROB_EPS;
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let (pt, a, sign) = if y { (p, 1.0, 1.0) } else { (1.0 - p, alpha, -1.0) };
    let q = 1.0 - pt;
    let loss = -a * q.powf(gamma) * pt.ln();
    // d/dpt of -a q^g ln pt = a (g q^(g-1) ln pt - q^g / pt)
    let dpt = if gamma == 0.0 {
        -a / pt
    } else {
        a * (gamma * q.powf(gamma - 1.0) * pt.ln() - q.powf(gamma) / pt)
    };
    (loss, if inside { sign * dpt } else { 0.0 })
}

/// Mean focal loss of probabilities `p` against binary labels `y`.
pub fn focal_loss(p: &[f64], y: &[u8], gamma: f64, alpha: f64) -> Result<f64> {
    if p.len() != y.len() || p.is_empty() {
        return Err(Error::shape("focal_loss", format!("{} predictions, {} labels", p.len(), y.len())));
    }
    let s: f64 = p.iter().zip(y).map(|(&p, &y)| focal_pixel(p, y != 0, gamma, alpha).0).sum();
    Ok(s / p.len() as f64)
}

/// `-0.5 * sum(1 + logvar - mu^2 - exp(logvar)) / batch`.
pub fn kl_loss(mu: &[f64], logvar: &[f64], batch: usize) -> Result<f64> {
    if mu.len() != logvar.len() || batch == 0 {
        return Err(Error::shape("kl_loss", format!("mu {} vs logvar {} values, batch {batch}", mu.len(), logvar.len())));
    }
    let s: f64 = mu.iter().zip(logvar).map(|(m, l)| 1.0 + l - m * m - l.exp()).sum();
    Ok(-0.5 * s / batch as f64)
}

impl Graph {
    pub fn focal_loss(&mut self, p: Var, y: &[u8], gamma: f64, alpha: f64) -> Result<Var> {
        let pv = self.value(p).data();
        if pv.len() != y.len() || pv.is_empty() {
            return Err(Error::shape("focal_loss", format!("{} predictions, {} labels", pv.len(), y.len())));
        }
        let n = pv.len() as f64;
        let (mut total, mut grad) = (0.0, Vec::with_capacity(pv.len()));
        for (&pp, &yy) in pv.iter().zip(y) {
            let (l, d) = focal_pixel(pp, yy != 0, gamma, alpha);
            total += l;
            grad.push(d / n);
        }
        let shape = self.value(p).shape().to_vec();
        Ok(self.push(
            "focal_loss",
            Tensor::scalar(total / n),
            &[p],
            Box::new(move |c| {
                let g = c.grad.item();
                vec![Some(Tensor::new(&shape, grad.iter().map(|d| d * g).collect()).unwrap())]
            }),
        ))
    }

    pub fn kl_loss(&mut self, mu: Var, logvar: Var, batch: usize) -> Result<Var> {
        let mu2 = self.mul(mu, mu)?;
        let ev = self.exp(logvar);
        let a = self.sub(logvar, mu2)?;
        let a = self.sub(a, ev)?;
        let a = self.add_scalar(a, 1.0);
        let s = self.sum(a);
        Ok(self.scale(s, -0.5 / batch as f64))
    }

    /// Divergence penalty as a graph node over the model's convolution
    /// parameters.
    pub fn da_loss(&mut self, store: &ParamStore, reference: &ParamStore) -> Result<Var> {
        let layers = paired_layers(store, reference)?;
        let mut parents = Vec::new();
        let mut coef = Vec::new();
        let mut total = 0.0;
        for l in &layers {
            for &(i, j) in &l.pairs {
                parents.push(self.param(store, i));
                coef.push((reference.value(j).clone(), l.ref_norm));
            }
            total += l.diff / l.ref_norm;
        }
        Ok(self.push(
            "da_loss",
            Tensor::scalar(total),
            &parents,
            Box::new(move |c| {
                let g = c.grad.item();
                c.inputs
                    .iter()
                    .zip(&coef)
                    .map(|(w, (w0, n0))| {
                        let d = w.data().iter().zip(w0.data()).map(|(a, b)| 2.0 * g * (a - b) / n0).collect();
                        Some(Tensor::new(w.shape(), d).unwrap())
                    })
                    .collect()
            }),
        ))
    }
}

struct LayerPair {
    pairs: Vec<(usize, usize)>,
    diff: f64,
    ref_norm: f64,
}

/// Convolution layers of `model` paired by identifier with `reference`.
fn paired_layers(model: &ParamStore, reference: &ParamStore) -> Result<Vec<LayerPair>> {
    let mut by_layer: BTreeMap<&str, LayerPair> = BTreeMap::new();
    for (i, p) in model.iter().enumerate().filter(|(_, p)| p.kind.is_conv()) {
        let j = reference.index_of(&p.id).ok_or_else(|| Error::LayerMismatch(p.id.clone()))?;
        let r = reference.get(j);
        if r.value.shape() != p.value.shape() || r.kind != p.kind || r.layer != p.layer {
            return Err(Error::LayerMismatch(p.id.clone()));
        }
        let e = by_layer.entry(p.layer.as_str()).or_insert(LayerPair {
            pairs: Vec::new(),
            diff: 0.0,
            ref_norm: 0.0,
        });
        e.pairs.push((i, j));
        e.diff += p.value.data().iter().zip(r.value.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        e.ref_norm += r.value.sum_sq();
    }
    if let Some(extra) = reference.iter().find(|r| r.kind.is_conv() && model.index_of(&r.id).is_none()) {
        return Err(Error::LayerMismatch(extra.id.clone()));
    }
    for (name, l) in &by_layer {
        if l.ref_norm == 0.0 {
            return Err(Error::ZeroNormReference(name.to_string()));
        }
    }
    Ok(by_layer.into_values().collect())
}

/// Sum over convolution layers of `|w - w0|^2 + |b - b0|^2` over
/// `|w0|^2 + |b0|^2`.
pub fn da_loss(model: &ParamStore, reference: &ParamStore) -> Result<f64> {
    Ok(paired_layers(model, reference)?.iter().map(|l| l.diff / l.ref_norm).sum())
}
