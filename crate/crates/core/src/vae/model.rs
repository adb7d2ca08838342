use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::arch::{AntennaMode, ArchConfig};
use crate::autograd::{Graph, ParamKind, ParamStore, Tensor, Var};
use crate::cfel::{init_grid, CfelParams};
use crate::error::{Error, Result};
use crate::sim::Frame;
use crate::util::derive_seed;

pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;

/// CFEL front end plus the residual encoder/decoder, with every weight held
/// in one [`ParamStore`] under a stable identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: ArchConfig,
    pub store: ParamStore,
}

/// Graph handles produced by [`Model::forward`].
#[derive(Debug, Clone, Copy)]
pub struct Outputs {
    /// `[batch, n_range * n_doppler]` probabilities.
    pub prob: Var,
    /// `[batch * branches, latent]`.
    pub mu: Var,
    pub logvar: Var,
    pub batch: usize,
}

fn branch_prefixes(arch: &ArchConfig) -> Vec<String> {
    match arch.antenna_mode {
        AntennaMode::Untied => (0..arch.n_rx).map(|r| format!("rx{r}.")).collect(),
        _ => vec![String::new()],
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let lim = (3.0 / fan_in as f64).sqrt();
    (0..n).map(|_| rng.random_range(-lim..lim)).collect()
}

fn init_conv(store: &mut ParamStore, rng: &mut ChaCha8Rng, layer: &str, o: usize, c: usize, k: usize) -> Result<()> {
    let w = uniform(rng, o * c * k * k, c * k * k);
    store.insert(&format!("{layer}.w"), layer, ParamKind::ConvWeight, Tensor::new(&[o, c, k, k], w)?)?;
    store.insert(&format!("{layer}.b"), layer, ParamKind::ConvBias, Tensor::zeros(&[o]))?;
    Ok(())
}

/// Initializes a model: CFEL on the harmonic grid, convolution and dense
/// weights uniform in `+-sqrt(3 / fan_in)`, zero biases.
pub fn build_model(arch: &ArchConfig, seed: u64) -> Result<Model> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::default();
    let grid = init_grid(arch.n_range, arch.n_doppler, arch.samples, arch.chirps, arch.fast_rate_hz, arch.slow_rate_hz);
    let k = grid.kernels();
    store.insert("cfel.f_ft", "cfel", ParamKind::CfelFast, Tensor::new(&[k], grid.f_ft)?)?;
    store.insert("cfel.f_st", "cfel", ParamKind::CfelSlow, Tensor::new(&[k], grid.f_st)?)?;

    let ch = arch.channels();
    let e = arch.encoder_blocks;
    let flat = arch.flat_features();
    let mut dense_specs = Vec::new();
    for prefix in branch_prefixes(arch) {
        let mut c_in = arch.input_channels();
        for (i, &c) in ch.iter().enumerate() {
            init_conv(&mut store, &mut rng, &format!("{prefix}enc{i}.conv_a"), c, c_in, 3)?;
            init_conv(&mut store, &mut rng, &format!("{prefix}enc{i}.conv_b"), c, c, 3)?;
            init_conv(&mut store, &mut rng, &format!("{prefix}enc{i}.proj"), c, c_in, 1)?;
            init_conv(&mut store, &mut rng, &format!("{prefix}enc{i}.down"), c, c, 3)?;
            c_in = c;
        }
        dense_specs.push((format!("{prefix}bottleneck.mu"), arch.latent_dim, flat));
        dense_specs.push((format!("{prefix}bottleneck.logvar"), arch.latent_dim, flat));
        dense_specs.push((format!("{prefix}bottleneck.dec"), flat, arch.latent_dim));
        for (layer, o, i) in dense_specs.drain(..) {
            let w = uniform(&mut rng, o * i, i);
            store.insert(&format!("{layer}.w"), &layer, ParamKind::DenseWeight, Tensor::new(&[o, i], w)?)?;
            store.insert(&format!("{layer}.b"), &layer, ParamKind::DenseBias, Tensor::zeros(&[o]))?;
        }
        for kb in 0..arch.decoder_blocks() {
            let c = ch[e - 2 - kb];
            init_conv(&mut store, &mut rng, &format!("{prefix}dec{kb}.up"), c, c_in, 2)?;
            init_conv(&mut store, &mut rng, &format!("{prefix}dec{kb}.conv_a"), c, 2 * c, 3)?;
            init_conv(&mut store, &mut rng, &format!("{prefix}dec{kb}.conv_b"), c, c, 3)?;
            init_conv(&mut store, &mut rng, &format!("{prefix}dec{kb}.proj"), c, 2 * c, 1)?;
            c_in = c;
        }
    }
    init_conv(&mut store, &mut rng, "head.merge", ch[0], arch.branches() * ch[0], 1)?;
    init_conv(&mut store, &mut rng, "head.out", 1, ch[0], 1)?;
    store.round_to_f32();
    Ok(Model {
        arch: arch.clone(),
        store,
    })
}

/// Smooth bound `10 tanh(x / 10)` onto `(LOGVAR_MIN, LOGVAR_MAX)`; unlike a hard
/// clamp its gradient never vanishes, so a saturated variance can recover.
pub fn bound_logvar(g: &mut Graph, raw: Var) -> Var {
    let half = 0.5 * (LOGVAR_MAX - LOGVAR_MIN);
    let x = g.scale(raw, 2.0 / half);
    let s = g.sigmoid(x);
    let s = g.scale(s, 2.0 * half);
    g.add_scalar(s, LOGVAR_MIN)
}

/// `z = mu + exp(logvar / 2) * eps` on a training graph, `z = mu` otherwise.
pub fn reparameterize(g: &mut Graph, mu: Var, logvar: Var, seed: u64) -> Result<Var> {
    if !g.is_training() {
        return Ok(mu);
    }
    let shape = g.value(mu).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps: Vec<f64> = (0..g.value(mu).len()).map(|_| rng.sample(StandardNormal)).collect();
    let eps = g.input(Tensor::new(&shape, eps)?);
    let half = g.scale(logvar, 0.5);
    let sd = g.exp(half);
    let noise = g.mul(sd, eps)?;
    g.add(mu, noise)
}

struct Ctx<'a> {
    g: &'a mut Graph,
    store: &'a ParamStore,
    vars: HashMap<usize, Var>,
    seed: u64,
    draws: u64,
}

impl Ctx<'_> {
    fn p(&mut self, id: &str) -> Result<Var> {
        let i = self.store.index_of(id).ok_or_else(|| Error::LayerMismatch(id.to_string()))?;
        Ok(*self.vars.entry(i).or_insert_with(|| self.g.param(self.store, i)))
    }

    fn conv(&mut self, x: Var, layer: &str, stride: usize) -> Result<Var> {
        let w = self.p(&format!("{layer}.w"))?;
        let b = self.p(&format!("{layer}.b"))?;
        self.g.conv2d(x, w, b, stride)
    }

    fn dense(&mut self, x: Var, layer: &str) -> Result<Var> {
        let w = self.p(&format!("{layer}.w"))?;
        let b = self.p(&format!("{layer}.b"))?;
        self.g.dense(x, w, b)
    }

    fn next_seed(&mut self) -> u64 {
        self.draws += 1;
        derive_seed(self.seed, self.draws)
    }

    fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        let s = self.next_seed();
        self.g.dropout(x, rate, Some(s))
    }
}

impl Model {
    pub fn cfel_params(&self) -> CfelParams {
        let a = &self.arch;
        let mut p = init_grid(a.n_range, a.n_doppler, a.samples, a.chirps, a.fast_rate_hz, a.slow_rate_hz);
        p.f_ft = self.store.value(0).data().to_vec();
        p.f_st = self.store.value(1).data().to_vec();
        p
    }

    pub fn param_count(&self) -> usize {
        self.store.count()
    }

    /// Builds the network on `g` for a batch of frames. `seed` drives
    /// dropout masks and latent sampling on training graphs.
    pub fn forward(&self, g: &mut Graph, frames: &[&Frame], seed: u64) -> Result<Outputs> {
        let a = &self.arch;
        let b = frames.len();
        if b == 0 {
            return Err(Error::InvalidConfig("empty batch".into()));
        }
        if let Some(f) = frames.iter().find(|f| f.n_rx != a.n_rx) {
            return Err(Error::shape("forward", format!("frame has {} antennas, model {}", f.n_rx, a.n_rx)));
        }
        let mut cx = Ctx {
            g,
            store: &self.store,
            vars: HashMap::new(),
            seed,
            draws: 0,
        };
        let f_ft = cx.p("cfel.f_ft")?;
        let f_st = cx.p("cfel.f_st")?;
        let template = self.cfel_params();
        let scale = 1.0 / ((a.samples * a.chirps) as f64).sqrt();
        let (h, w) = (a.n_range, a.n_doppler);
        let mut spectra = Vec::with_capacity(b);
        for f in frames {
            spectra.push(cx.g.cfel(f, &template, f_ft, f_st, scale)?);
        }

        let mut features = Vec::new();
        let mut mus = Vec::new();
        let mut logvars = Vec::new();
        match a.antenna_mode {
            AntennaMode::Fused => {
                let flat: Vec<Var> = spectra
                    .iter()
                    .map(|&s| cx.g.reshape(s, &[1, 2 * a.n_rx, h, w]))
                    .collect::<Result<_>>()?;
                let x = cx.g.concat(&flat, 0)?;
                let (f, mu, lv) = self.branch(&mut cx, x, "")?;
                features.push(f);
                mus.push(mu);
                logvars.push(lv);
            }
            mode => {
                let mut per_rx = Vec::with_capacity(a.n_rx);
                for r in 0..a.n_rx {
                    let parts: Vec<Var> = spectra.iter().map(|&s| cx.g.slice(s, 0, r, 1)).collect::<Result<_>>()?;
                    per_rx.push(cx.g.concat(&parts, 0)?);
                }
                if mode == AntennaMode::Shared {
                    let x = cx.g.concat(&per_rx, 0)?;
                    let (f, mu, lv) = self.branch(&mut cx, x, "")?;
                    for r in 0..a.n_rx {
                        features.push(cx.g.slice(f, 0, r * b, b)?);
                    }
                    mus.push(mu);
                    logvars.push(lv);
                } else {
                    for (r, x) in per_rx.into_iter().enumerate() {
                        let (f, mu, lv) = self.branch(&mut cx, x, &format!("rx{r}."))?;
                        features.push(f);
                        mus.push(mu);
                        logvars.push(lv);
                    }
                }
            }
        }
        let merged = cx.g.concat(&features, 1)?;
        let m = cx.conv(merged, "head.merge", 1)?;
        let m = cx.g.elu(m);
        let o = cx.conv(m, "head.out", 1)?;
        let p = cx.g.sigmoid(o);
        let prob = cx.g.reshape(p, &[b, h * w])?;
        let mu = cx.g.concat(&mus, 0)?;
        let logvar = cx.g.concat(&logvars, 0)?;
        Ok(Outputs {
            prob,
            mu,
            logvar,
            batch: b,
        })
    }

    /// Encoder, bottleneck and decoder on `[n, c_in, h, w]`; returns the
    /// last decoder features with the latent statistics.
    fn branch(&self, cx: &mut Ctx, x: Var, prefix: &str) -> Result<(Var, Var, Var)> {
        let a = &self.arch;
        let e = a.encoder_blocks;
        let ch = a.channels();
        let res = a.resolutions();
        let n = cx.g.value(x).shape()[0];
        let mut x = x;
        let mut skips = Vec::with_capacity(e);
        for i in 0..e {
            let l = format!("{prefix}enc{i}");
            let h = cx.conv(x, &format!("{l}.conv_a"), 1)?;
            let h = cx.g.elu(h);
            let h = cx.dropout(h, a.dropout_rate)?;
            let h = cx.conv(h, &format!("{l}.conv_b"), 1)?;
            let r = cx.conv(x, &format!("{l}.proj"), 1)?;
            let s = cx.g.add(h, r)?;
            let s = cx.g.elu(s);
            skips.push(s);
            let d = cx.conv(s, &format!("{l}.down"), if i + 1 < e { 2 } else { 1 })?;
            x = cx.g.elu(d);
        }
        let flat = cx.g.reshape(x, &[n, a.flat_features()])?;
        let mu = cx.dense(flat, &format!("{prefix}bottleneck.mu"))?;
        let lv = cx.dense(flat, &format!("{prefix}bottleneck.logvar"))?;
        let lv = bound_logvar(cx.g, lv);
        let zs = cx.next_seed();
        let z = reparameterize(cx.g, mu, lv, zs)?;
        let d = cx.dense(z, &format!("{prefix}bottleneck.dec"))?;
        let d = cx.g.elu(d);
        let (hl, wl) = res[e - 1];
        let mut x = cx.g.reshape(d, &[n, ch[e - 1], hl, wl])?;
        for k in 0..a.decoder_blocks() {
            let l = format!("{prefix}dec{k}");
            let u = cx.g.upsample2(x)?;
            let u = cx.conv(u, &format!("{l}.up"), 1)?;
            let u = cx.g.elu(u);
            let cat = cx.g.concat(&[u, skips[e - 2 - k]], 1)?;
            let h = cx.conv(cat, &format!("{l}.conv_a"), 1)?;
            let h = cx.g.elu(h);
            let h = cx.dropout(h, a.dropout_rate)?;
            let h = cx.conv(h, &format!("{l}.conv_b"), 1)?;
            let r = cx.conv(cat, &format!("{l}.proj"), 1)?;
            let s = cx.g.add(h, r)?;
            x = cx.g.elu(s);
        }
        Ok((x, mu, lv))
    }

    /// Inference probability maps, one `[n_range * n_doppler]` vector per frame.
    pub fn predict(&self, frames: &[&Frame]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(frames.len());
        for chunk in frames.chunks(32) {
            let mut g = Graph::new(false);
            let o = self.forward(&mut g, chunk, 0)?;
            let hw = self.arch.n_range * self.arch.n_doppler;
            out.extend(g.value(o.prob).data().chunks(hw).map(<[f64]>::to_vec));
        }
        Ok(out)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::config::RadarConfig;
    use crate::sim::{synth_frame, PointTarget};

    pub(crate) fn tiny_arch(mode: AntennaMode) -> ArchConfig {
        ArchConfig {
            initial_channels: 3,
            latent_dim: 4,
            dropout_rate: 0.4,
            antenna_mode: mode,
            ..ArchConfig::for_radar(&RadarConfig::desk(), 2, 3, 4)
        }
    }

    pub(crate) fn desk_frame(seed: u64) -> Frame {
        let cfg = RadarConfig::desk();
        let f = synth_frame(&[PointTarget::new(1.2, 0.8, 15.0)], &cfg, 15.0, seed).unwrap();
        crate::dataset::normalize_frame(&f).unwrap()
    }

    #[test]
    fn output_shape_and_range() {
        for mode in [AntennaMode::Shared, AntennaMode::Untied, AntennaMode::Fused] {
            let m = build_model(&tiny_arch(mode), 1).unwrap();
            let (a, b) = (desk_frame(1), desk_frame(2));
            let maps = m.predict(&[&a, &b]).unwrap();
            assert_eq!(maps.len(), 2);
            assert!(maps.iter().all(|p| p.len() == 16 * 8 && p.iter().all(|&v| v > 0.0 && v < 1.0)));
        }
    }

    #[test]
    fn inference_is_deterministic() {
        let m = build_model(&tiny_arch(AntennaMode::Shared), 5).unwrap();
        let f = desk_frame(3);
        assert_eq!(m.predict(&[&f]).unwrap(), m.predict(&[&f]).unwrap());
        assert_eq!(build_model(&tiny_arch(AntennaMode::Shared), 5).unwrap(), m);
    }

    #[test]
    fn batching_does_not_change_inference() {
        let m = build_model(&tiny_arch(AntennaMode::Shared), 2).unwrap();
        let (a, b) = (desk_frame(1), desk_frame(2));
        let both = m.predict(&[&a, &b]).unwrap();
        let single = m.predict(&[&b]).unwrap();
        for (x, y) in both[1].iter().zip(&single[0]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn full_arch_builds_with_expected_output() {
        let m = build_model(&ArchConfig::full(), 0).unwrap();
        assert!(m.store.index_of("enc5.down.w").is_some());
        assert!(m.store.index_of("dec4.conv_b.w").is_some());
        assert_eq!(m.store.value(m.store.index_of("bottleneck.mu.w").unwrap()).shape(), &[140, 652]);
        let cfg = RadarConfig::default();
        let f = synth_frame(&[PointTarget::new(2.0, 1.0, 20.0)], &cfg, 20.0, 0).unwrap();
        let p = m.predict(&[&f]).unwrap();
        assert_eq!(p[0].len(), 128 * 32);
        assert!(p[0].iter().all(|v| v.is_finite() && *v > 0.0 && *v < 1.0));
    }

    #[test]
    fn inference_latent_is_mu() {
        let mut g = Graph::new(false);
        let mu = g.input(Tensor::new(&[1, 3], vec![0.5, -1.0, 2.0]).unwrap());
        let lv = g.input(Tensor::filled(&[1, 3], 3.0));
        let z = reparameterize(&mut g, mu, lv, 9).unwrap();
        assert_eq!(g.value(z), g.value(mu));
    }

    #[test]
    fn logvar_bound_is_tanh_shaped() {
        let mut g = Graph::new(false);
        let xs = [-1e9, -30.0, -1.0, 0.0, 2.5, 40.0, 1e9];
        let raw = g.input(Tensor::new(&[7], xs.to_vec()).unwrap());
        let lv = bound_logvar(&mut g, raw);
        for (x, y) in xs.iter().zip(g.value(lv).data()) {
            assert!((y - 10.0 * (x / 10.0).tanh()).abs() < 1e-12);
            assert!((LOGVAR_MIN..=LOGVAR_MAX).contains(y));
        }
    }

    #[test]
    fn clamp_floor_keeps_sample_near_mu() {
        let mut g = Graph::new(true);
        let muv: Vec<f64> = (0..140).map(|i| 1.0 + (i % 7) as f64).collect();
        let mu = g.input(Tensor::new(&[1, 140], muv.clone()).unwrap());
        let raw = g.input(Tensor::filled(&[1, 140], f64::NEG_INFINITY));
        let lv = bound_logvar(&mut g, raw);
        let z = reparameterize(&mut g, mu, lv, 3).unwrap();
        let diff: f64 = g.value(z).data().iter().zip(&muv).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = muv.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(diff < 1e-2 * norm, "{diff} vs {norm}");
    }

    #[test]
    fn sampling_is_reproducible() {
        let draw = |seed| {
            let mut g = Graph::new(true);
            let mu = g.input(Tensor::zeros(&[2, 4]));
            let lv = g.input(Tensor::zeros(&[2, 4]));
            let z = reparameterize(&mut g, mu, lv, seed).unwrap();
            g.value(z).clone()
        };
        assert_eq!(draw(4), draw(4));
        assert_ne!(draw(4), draw(5));
    }
}
