use rand::{Rng, SeedableRng};
use serde::Serialize;

use super::{Graph, ParamKind, ParamStore, Tensor, Var};
use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckEntry {
    pub id: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub nondeterministic: bool,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        !self.nondeterministic && self.entries.iter().all(|e| e.passed)
    }

    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Options for [`grad_check`].
#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Step for CFEL frequencies, whose phase grows with the sample index.
    pub eps_frequency: f64,
    pub tolerance: f64,
    /// Check at most this many evenly spaced entries per parameter.
    pub max_per_param: Option<usize>,
    /// Only parameters whose id starts with this prefix.
    pub only: Option<&'static str>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-4,
            eps_frequency: 1e-6,
            tolerance: 1e-3,
            max_per_param: None,
            only: None,
        }
    }
}

/// Compares analytic gradients of the scalar built by `build` with central
/// differences.
///
/// The error of entry `k` is `|a_k - n_k| / max(|a_k|, |n_k|, 1e-2 * S, 1e-9)`
/// where `S` is the largest gradient magnitude of that parameter, so entries
/// that are tiny relative to the rest of the tensor are judged on the
/// tensor's scale. A build that does not reproduce its own value is flagged
/// nondeterministic and not checked.
pub fn grad_check<F>(store: &ParamStore, build: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let eval = |s: &ParamStore| -> Result<(f64, bool)> {
        let mut g = Graph::new(true);
        let l = build(&mut g, s)?;
        Ok((g.value(l).item(), g.is_nondeterministic()))
    };
    let mut g = Graph::new(true);
    let loss = build(&mut g, store)?;
    let (again, nd) = eval(store)?;
    let mut report = GradCheckReport {
        tolerance: opts.tolerance,
        nondeterministic: g.is_nondeterministic() || nd || again.to_bits() != g.value(loss).item().to_bits(),
        entries: Vec::new(),
    };
    if report.nondeterministic {
        return Ok(report);
    }
    let grads = g.backward(loss)?;
    let mut work = store.clone();
    for i in 0..store.len() {
        let p = store.get(i);
        if opts.only.is_some_and(|pre| !p.id.starts_with(pre)) {
            continue;
        }
        let n = p.value.len();
        let picks: Vec<usize> = match opts.max_per_param {
            Some(m) if m < n => (0..m).map(|k| k * n / m).collect(),
            _ => (0..n).collect(),
        };
        let h = if p.kind.is_frequency() { opts.eps_frequency } else { opts.eps };
        let mut pairs = Vec::with_capacity(picks.len());
        for &k in &picks {
            let orig = work.value(i).data()[k];
            work.value_mut(i).data_mut()[k] = orig + h;
            let (lp, _) = eval(&work)?;
            work.value_mut(i).data_mut()[k] = orig - h;
            let (lm, _) = eval(&work)?;
            work.value_mut(i).data_mut()[k] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            let analytic = grads.get(i).map_or(0.0, |t| t.data()[k]);
            pairs.push((analytic, numeric));
        }
        let scale = pairs.iter().fold(0.0f64, |m, (a, b)| m.max(a.abs()).max(b.abs()));
        let max_rel_error = pairs
            .iter()
            .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-2 * scale).max(1e-9))
            .fold(0.0, f64::max);
        report.entries.push(GradCheckEntry {
            id: p.id.clone(),
            checked: picks.len(),
            max_rel_error,
            passed: max_rel_error < opts.tolerance,
        });
    }
    Ok(report)
}

fn random_store(shapes: &[(&str, &[usize])], seed: u64) -> ParamStore {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::default();
    for (id, shape) in shapes {
        let n = shape.iter().product();
        let t = Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape");
        s.insert(id, id, ParamKind::Other, t).expect("unique id");
    }
    s
}

fn input(g: &mut Graph, shape: &[usize], seed: u64) -> Var {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    g.input(Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape"))
}

/// Checks every graph primitive, one at a time, on small random shapes.
pub fn primitive_suite(opts: &GradCheckOptions) -> Result<Vec<(&'static str, GradCheckReport)>> {
    type Build = Box<dyn Fn(&mut Graph, &ParamStore) -> Result<Var>>;
    type Case<'a> = (&'a str, Vec<(&'a str, &'a [usize])>, Build);
    let cases: Vec<Case> = vec![
        ("add", vec![("a", &[3, 2]), ("b", &[3, 2])], Box::new(|g, s| {
            let (a, b) = (g.param(s, 0), g.param(s, 1));
            let y = g.add(a, b)?;
            let y = g.mul(y, y)?;
            Ok(g.sum(y))
        })),
        ("sub_mul", vec![("a", &[4]), ("b", &[4])], Box::new(|g, s| {
            let (a, b) = (g.param(s, 0), g.param(s, 1));
            let d = g.sub(a, b)?;
            let y = g.mul(d, a)?;
            Ok(g.sum(y))
        })),
        ("matmul", vec![("a", &[3, 4]), ("b", &[4, 2])], Box::new(|g, s| {
            let (a, b) = (g.param(s, 0), g.param(s, 1));
            let y = g.matmul(a, b)?;
            let y = g.mul(y, y)?;
            Ok(g.sum(y))
        })),
        ("conv2d", vec![("w", &[3, 2, 3, 3]), ("b", &[3])], Box::new(|g, s| {
            let x = input(g, &[2, 2, 5, 4], 3);
            let (w, b) = (g.param(s, 0), g.param(s, 1));
            let y = g.conv2d(x, w, b, 1)?;
            let y = g.mul(y, y)?;
            Ok(g.sum(y))
        })),
        ("conv2d_stride2", vec![("w", &[2, 2, 3, 3]), ("b", &[2]), ("x", &[1, 2, 6, 5])], Box::new(|g, s| {
            let (w, b, x) = (g.param(s, 0), g.param(s, 1), g.param(s, 2));
            let y = g.conv2d(x, w, b, 2)?;
            let y = g.mul(y, y)?;
            Ok(g.sum(y))
        })),
        ("conv2x2", vec![("w", &[2, 3, 2, 2]), ("b", &[2]), ("x", &[1, 3, 4, 4])], Box::new(|g, s| {
            let (w, b, x) = (g.param(s, 0), g.param(s, 1), g.param(s, 2));
            let y = g.conv2d(x, w, b, 1)?;
            let y = g.sigmoid(y);
            Ok(g.sum(y))
        })),
        ("conv1x1", vec![("w", &[2, 3, 1, 1]), ("b", &[2]), ("x", &[2, 3, 2, 2])], Box::new(|g, s| {
            let (w, b, x) = (g.param(s, 0), g.param(s, 1), g.param(s, 2));
            let y = g.conv1x1(x, w, b)?;
            let y = g.mul(y, y)?;
            Ok(g.sum(y))
        })),
        ("upsample", vec![("x", &[1, 2, 2, 3])], Box::new(|g, s| {
            let x = g.param(s, 0);
            let u = g.upsample2(x)?;
            let w = input(g, &[1, 2, 4, 6], 4);
            let y = g.mul(u, w)?;
            let y = g.mul(y, u)?;
            Ok(g.sum(y))
        })),
        ("concat_slice", vec![("a", &[2, 2, 3]), ("b", &[2, 1, 3])], Box::new(|g, s| {
            let (a, b) = (g.param(s, 0), g.param(s, 1));
            let c = g.concat(&[a, b], 1)?;
            let sl = g.slice(c, 1, 1, 2)?;
            let y = g.mul(sl, sl)?;
            let w = input(g, &[2, 2, 3], 5);
            let y = g.mul(y, w)?;
            Ok(g.sum(y))
        })),
        ("dense", vec![("w", &[3, 4]), ("b", &[3]), ("x", &[2, 4])], Box::new(|g, s| {
            let (w, b, x) = (g.param(s, 0), g.param(s, 1), g.param(s, 2));
            let y = g.dense(x, w, b)?;
            let y = g.mul(y, y)?;
            Ok(g.mean(y))
        })),
        ("dropout_seeded", vec![("x", &[20])], Box::new(|g, s| {
            let x = g.param(s, 0);
            let y = g.dropout(x, 0.4, Some(7))?;
            let y = g.mul(y, y)?;
            Ok(g.sum(y))
        })),
        ("exp_log", vec![("x", &[5])], Box::new(|g, s| {
            let x = g.param(s, 0);
            let e = g.exp(x);
            let e1 = g.add_scalar(e, 1.0);
            let l = g.log(e1);
            let y = g.scale(l, 1.5);
            Ok(g.sum(y))
        })),
        ("elu_clamp", vec![("x", &[6])], Box::new(|g, s| {
            let x = g.param(s, 0);
            let s2 = g.scale(x, 3.0);
            let c = g.clamp(s2, -2.0, 2.0);
            let e = g.elu(c);
            let y = g.mul(e, e)?;
            Ok(g.sum(y))
        })),
        ("reshape_mean", vec![("x", &[2, 6])], Box::new(|g, s| {
            let x = g.param(s, 0);
            let r = g.reshape(x, &[3, 4])?;
            let w = input(g, &[3, 4], 6);
            let y = g.mul(r, w)?;
            let y = g.mul(y, r)?;
            Ok(g.mean(y))
        })),
    ];
    let mut out = Vec::with_capacity(cases.len());
    for (k, (name, shapes, build)) in cases.into_iter().enumerate() {
        let s = random_store(&shapes, 100 + k as u64);
        out.push((name, grad_check(&s, |g, s| build(g, s), opts)?));
    }
    Ok(out)
}
