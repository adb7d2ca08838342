use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// What a backward rule sees: the gradient flowing into the node's output,
/// the forward values of its inputs and output, and which inputs need a
/// gradient at all.
pub struct BackCtx<'a> {
    pub grad: &'a Tensor,
    pub inputs: Vec<&'a Tensor>,
    pub output: &'a Tensor,
    pub needs: Vec<bool>,
}

/// Returns one entry per input; `None` where no gradient is needed.
pub type BackwardFn = Box<dyn Fn(&BackCtx) -> Vec<Option<Tensor>> + Send + Sync>;

struct Node {
    tag: &'static str,
    value: Tensor,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    param: Option<usize>,
    needs_grad: bool,
}

/// Tape of operations recorded in evaluation order.
pub struct Graph {
    nodes: Vec<Node>,
    train: bool,
    nondeterministic: bool,
}

/// Parameter gradients keyed by [`ParamStore`] index.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    pub by_param: BTreeMap<usize, Tensor>,
}

impl Gradients {
    pub fn get(&self, param: usize) -> Option<&Tensor> {
        self.by_param.get(&param)
    }

    pub fn merge(&mut self, other: Gradients) {
        for (k, g) in other.by_param {
            match self.by_param.get_mut(&k) {
                Some(acc) => acc.add_assign(&g),
                None => {
                    self.by_param.insert(k, g);
                }
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for g in self.by_param.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= k);
        }
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

impl Graph {
    pub fn new(train: bool) -> Self {
        Self {
            nodes: Vec::new(),
            train,
            nondeterministic: false,
        }
    }

    pub fn is_training(&self) -> bool {
        self.train
    }

    /// True once an op drew randomness that is not reproducible.
    pub fn is_nondeterministic(&self) -> bool {
        self.nondeterministic
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn tag(&self, v: Var) -> &'static str {
        self.nodes[v.0].tag
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            tag: "input",
            value: t,
            parents: Vec::new(),
            backward: None,
            param: None,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf bound to parameter `index` of `store`.
    pub fn param(&mut self, store: &ParamStore, index: usize) -> Var {
        self.nodes.push(Node {
            tag: "param",
            value: store.value(index).clone(),
            parents: Vec::new(),
            backward: None,
            param: Some(index),
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a node computed outside the graph together with its backward rule.
    pub fn push(&mut self, tag: &'static str, value: Tensor, parents: &[Var], backward: BackwardFn) -> Var {
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            tag,
            value,
            parents: parents.iter().map(|p| p.0).collect(),
            backward: Some(backward),
            param: None,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = &self.nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", lv.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));
        let mut out = Gradients::default();
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if let Some(p) = node.param {
                match out.by_param.get_mut(&p) {
                    Some(acc) => acc.add_assign(&g),
                    None => {
                        out.by_param.insert(p, g);
                    }
                }
                continue;
            }
            let Some(bw) = &node.backward else { continue };
            let ctx = BackCtx {
                grad: &g,
                inputs: node.parents.iter().map(|&p| &self.nodes[p].value).collect(),
                output: &node.value,
                needs: node.parents.iter().map(|&p| self.nodes[p].needs_grad).collect(),
            };
            let pg = bw(&ctx);
            for (&p, gp) in node.parents.iter().zip(pg) {
                let Some(gp) = gp else { continue };
                if !self.nodes[p].needs_grad {
                    continue;
                }
                debug_assert_eq!(gp.shape(), self.nodes[p].value.shape(), "{}", node.tag);
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&gp),
                    slot => *slot = Some(gp),
                }
            }
        }
        Ok(out)
    }

    /// [`Graph::backward`] accumulated into the store's gradient buffers.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let g = self.backward(loss)?;
        store.accumulate(&g);
        Ok(())
    }

    fn unary(&mut self, tag: &'static str, x: Var, f: impl Fn(f64) -> f64, df: fn(f64, f64) -> f64) -> Var {
        let value = self.value(x).map(f);
        self.push(
            tag,
            value,
            &[x],
            Box::new(move |c| {
                let (x, y) = (c.inputs[0].data(), c.output.data());
                let data = c.grad.data().iter().enumerate().map(|(i, g)| g * df(x[i], y[i])).collect();
                vec![Some(Tensor::new(c.grad.shape(), data).unwrap())]
            }),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        Ok(self.push("add", v, &[a, b], Box::new(|c| vec![Some(c.grad.clone()), Some(c.grad.clone())])))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("sub", self.value(a), self.value(b))?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p - q).collect();
        let v = Tensor::new(x.shape(), data)?;
        Ok(self.push(
            "sub",
            v,
            &[a, b],
            Box::new(|c| vec![Some(c.grad.clone()), Some(c.grad.map(|g| -g))]),
        ))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self.value(a), self.value(b))?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let v = Tensor::new(x.shape(), data)?;
        Ok(self.push(
            "mul",
            v,
            &[a, b],
            Box::new(|c| {
                let g = c.grad.data();
                let prod = |o: &Tensor| {
                    let d = g.iter().zip(o.data()).map(|(g, o)| g * o).collect();
                    Tensor::new(c.grad.shape(), d).unwrap()
                };
                vec![
                    c.needs[0].then(|| prod(c.inputs[1])),
                    c.needs[1].then(|| prod(c.inputs[0])),
                ]
            }),
        ))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let v = self.value(x).map(|v| v * k);
        self.push("scale", v, &[x], Box::new(move |c| vec![Some(c.grad.map(|g| g * k))]))
    }

    pub fn add_scalar(&mut self, x: Var, k: f64) -> Var {
        let v = self.value(x).map(|v| v + k);
        self.push("add_scalar", v, &[x], Box::new(|c| vec![Some(c.grad.clone())]))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary("sigmoid", x, sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary("exp", x, f64::exp, |_, y| y)
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary("log", x, f64::ln, |x, _| 1.0 / x)
    }

    pub fn elu(&mut self, x: Var) -> Var {
        self.unary(
            "elu",
            x,
            |v| if v > 0.0 { v } else { v.exp_m1() },
            |x, y| if x > 0.0 { 1.0 } else { y + 1.0 },
        )
    }

    /// Elementwise clamp; the gradient is passed only inside `[lo, hi]`.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(x).map(|v| v.clamp(lo, hi));
        self.push(
            "clamp",
            v,
            &[x],
            Box::new(move |c| {
                let x = c.inputs[0].data();
                let d = c
                    .grad
                    .data()
                    .iter()
                    .zip(x)
                    .map(|(g, &x)| if (lo..=hi).contains(&x) { *g } else { 0.0 })
                    .collect();
                vec![Some(Tensor::new(c.grad.shape(), d).unwrap())]
            }),
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(
            "reshape",
            v,
            &[x],
            Box::new(|c| vec![Some(c.grad.clone().reshaped(c.inputs[0].shape()).unwrap())]),
        ))
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let src = self.value(x);
        let shape = src.shape().to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::shape(
                "slice",
                format!("axis {axis} [{start}, {}) of {shape:?}", start + len),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let full = shape[axis];
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            data.extend_from_slice(&src.data()[base..base + len * inner]);
        }
        let v = Tensor::new(&out_shape, data)?;
        Ok(self.push(
            "slice",
            v,
            &[x],
            Box::new(move |c| {
                let mut gx = Tensor::zeros(&shape);
                let gd = c.grad.data();
                for o in 0..outer {
                    let base = (o * full + start) * inner;
                    gx.data_mut()[base..base + len * inner].copy_from_slice(&gd[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Concatenation along `axis`; all other axes must agree.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .value(*xs.first().ok_or_else(|| Error::shape("concat", "no inputs"))?)
            .shape()
            .to_vec();
        if axis >= first.len() {
            return Err(Error::shape("concat", format!("axis {axis} of {first:?}")));
        }
        let mut sizes = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.value(x).shape();
            let ok = s.len() == first.len() && s.iter().enumerate().all(|(i, &d)| i == axis || d == first[i]);
            if !ok {
                return Err(Error::shape("concat", format!("{first:?} vs {s:?} on axis {axis}")));
            }
            sizes.push(s[axis]);
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let total: usize = sizes.iter().sum();
        let mut out_shape = first.clone();
        out_shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&x, &s) in xs.iter().zip(&sizes) {
                let d = self.value(x).data();
                data.extend_from_slice(&d[o * s * inner..(o + 1) * s * inner]);
            }
        }
        let v = Tensor::new(&out_shape, data)?;
        Ok(self.push(
            "concat",
            v,
            xs,
            Box::new(move |c| {
                let gd = c.grad.data();
                let mut parts: Vec<Vec<f64>> = sizes.iter().map(|&s| Vec::with_capacity(outer * s * inner)).collect();
                let mut pos = 0;
                for _ in 0..outer {
                    for (k, &s) in sizes.iter().enumerate() {
                        parts[k].extend_from_slice(&gd[pos..pos + s * inner]);
                        pos += s * inner;
                    }
                }
                parts
                    .into_iter()
                    .zip(&c.inputs)
                    .map(|(p, x)| Some(Tensor::new(x.shape(), p).unwrap()))
                    .collect()
            }),
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        self.push(
            "sum",
            Tensor::scalar(s),
            &[x],
            Box::new(|c| vec![Some(Tensor::filled(c.inputs[0].shape(), c.grad.item()))]),
        )
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s: f64 = self.value(x).data().iter().sum();
        self.push(
            "mean",
            Tensor::scalar(s / n),
            &[x],
            Box::new(move |c| vec![Some(Tensor::filled(c.inputs[0].shape(), c.grad.item() / n))]),
        )
    }

    /// Inverted dropout. Identity outside training or at `rate == 0`;
    /// without a seed the mask is drawn from the thread RNG and the graph
    /// is flagged nondeterministic.
    pub fn dropout(&mut self, x: Var, rate: f64, seed: Option<u64>) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidConfig(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !self.train || rate == 0.0 {
            return Ok(x);
        }
        let n = self.value(x).len();
        let keep = 1.0 - rate;
        let draw = |rng: &mut dyn rand::RngCore| -> Vec<f64> {
            (0..n)
                .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect()
        };
        let mask = match seed {
            Some(s) => draw(&mut ChaCha8Rng::seed_from_u64(s)),
            None => {
                self.nondeterministic = true;
                draw(&mut rand::rng())
            }
        };
        let xv = self.value(x);
        let data = xv.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let v = Tensor::new(xv.shape(), data)?;
        Ok(self.push(
            "dropout",
            v,
            &[x],
            Box::new(move |c| {
                let d = c.grad.data().iter().zip(&mask).map(|(g, m)| g * m).collect();
                vec![Some(Tensor::new(c.grad.shape(), d).unwrap())]
            }),
        ))
    }
}

#[inline]
pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
