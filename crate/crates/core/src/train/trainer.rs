use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::{evaluate, EvalOptions, Method};
use crate::autograd::{adam_step, AdamConfig, AdamState, Gradients, Graph};
use crate::config::RadarConfig;
use crate::dataset::LabeledExample;
use crate::error::{Error, Result};
use crate::util::derive_seed;
use crate::vae::{da_loss, save_checkpoint, LossBreakdown, LossWeights, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Synthetic,
    DomainAdapt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub loss: LossWeights,
    pub mode: TrainMode,
    pub seed: u64,
    /// Save a checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    /// Gradient shards per batch, evaluated in parallel.
    pub workers: usize,
    pub eval: EvalOptions,
    pub schedule: LrSchedule,
}

/// Learning rate as a function of training progress.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from the configured rate to zero over all steps.
    Cosine,
}

impl LrSchedule {
    pub fn rate(self, lr: f64, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => lr,
            LrSchedule::Cosine => 0.5 * lr * (1.0 + (std::f64::consts::PI * step as f64 / total.max(1) as f64).cos()),
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            adam: AdamConfig::default(),
            loss: LossWeights {
                beta: 0.0,
                ..LossWeights::default()
            },
            mode: TrainMode::Synthetic,
            seed: 0,
            checkpoint_every: 0,
            workers: 1,
            eval: EvalOptions::default(),
            schedule: LrSchedule::Constant,
        }
    }
}

/// One row of the metric log. Epoch 0 describes the initial model on the
/// validation split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub focal: f64,
    pub kl: f64,
    pub da: f64,
    pub total: f64,
    pub val_f1: f64,
    pub weight_divergence: Option<f64>,
}

pub fn log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,focal,kl,da,total,val_f1,weight_divergence\n");
    for r in log {
        let wd = r.weight_divergence.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{},{},{}", r.epoch, r.focal, r.kl, r.da, r.total, r.val_f1, wd);
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Model with the best validation F1 (the last one without validation data).
    pub best: Model,
    pub best_epoch: usize,
    pub last: Model,
    pub log: Vec<EpochLog>,
}

/// Divergence of `model` from `reference`, the same quantity as the DA loss.
pub fn weight_divergence(model: &Model, reference: &Model) -> Result<f64> {
    da_loss(&model.store, &reference.store)
}

fn check_examples(model: &Model, examples: &[&LabeledExample]) -> Result<()> {
    let a = &model.arch;
    for (i, e) in examples.iter().enumerate() {
        let f = &e.frame;
        if f.n_samples != a.samples || f.n_chirps != a.chirps || f.n_rx != a.n_rx || e.label.len() != a.n_range * a.n_doppler {
            return Err(Error::shape(
                "train",
                format!(
                    "example {i} is {}x{}x{} with {} labels, model expects {}x{}x{} with {}",
                    f.n_samples,
                    f.n_chirps,
                    f.n_rx,
                    e.label.len(),
                    a.samples,
                    a.chirps,
                    a.n_rx,
                    a.n_range * a.n_doppler
                ),
            ));
        }
    }
    Ok(())
}

/// Focal and KL terms of one shard, weighted as part of a batch of `batch`.
fn shard_loss(model: &Model, shard: &[&LabeledExample], batch: usize, lw: &LossWeights, seed: u64, train: bool) -> Result<(f64, f64, Option<Gradients>)> {
    let mut g = Graph::new(train);
    let frames: Vec<_> = shard.iter().map(|e| &e.frame).collect();
    let o = model.forward(&mut g, &frames, seed)?;
    let labels: Vec<u8> = shard.iter().flat_map(|e| e.label.iter().copied()).collect();
    let fl = g.focal_loss(o.prob, &labels, lw.gamma, lw.alpha)?;
    let fl = g.scale(fl, shard.len() as f64 / batch as f64);
    let kl = g.kl_loss(o.mu, o.logvar, batch)?;
    let (flv, klv) = (g.value(fl).item(), g.value(kl).item());
    if !train {
        return Ok((flv, klv, None));
    }
    let klw = g.scale(kl, lw.theta);
    let total = g.add(fl, klw)?;
    if !g.value(total).item().is_finite() {
        return Ok((flv, klv, None));
    }
    Ok((flv, klv, Some(g.backward(total)?)))
}

fn shards<'a, 'b>(batch: &'a [&'b LabeledExample], workers: usize) -> Vec<&'a [&'b LabeledExample]> {
    let per = batch.len().div_ceil(workers.max(1));
    batch.chunks(per.max(1)).collect()
}

/// Mean losses over `examples` in inference mode.
fn inference_losses(model: &Model, examples: &[&LabeledExample], lw: &LossWeights, bs: usize) -> Result<(f64, f64)> {
    let (mut fl, mut kl) = (0.0, 0.0);
    for chunk in examples.chunks(bs) {
        let (f, k, _) = shard_loss(model, chunk, chunk.len(), lw, 0, false)?;
        fl += f * chunk.len() as f64;
        kl += k * chunk.len() as f64;
    }
    let n = examples.len().max(1) as f64;
    Ok((fl / n, kl / n))
}

/// Minibatch Adam on the total loss. In domain-adaptation mode `reference`
/// is the frozen pretrained model; in synthetic mode the DA weight is zero.
/// Checkpoints and `metrics.csv` go to `out_dir` when given.
pub fn train(
    model: Model,
    train_set: &[&LabeledExample],
    val_set: &[&LabeledExample],
    radar: &RadarConfig,
    cfg: &TrainConfig,
    reference: Option<&Model>,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    if cfg.batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be positive".into()));
    }
    cfg.loss.validate()?;
    check_examples(&model, train_set)?;
    check_examples(&model, val_set)?;
    let mut lw = cfg.loss;
    let reference = match cfg.mode {
        TrainMode::Synthetic => {
            if lw.beta != 0.0 {
                log::warn!("synthetic training ignores the DA weight {}", lw.beta);
                lw.beta = 0.0;
            }
            None
        }
        TrainMode::DomainAdapt => {
            let r = reference.ok_or_else(|| Error::Usage("domain adaptation needs a reference model".into()))?;
            if r.arch != model.arch {
                return Err(Error::LayerMismatch("reference architecture differs".into()));
            }
            weight_divergence(&model, r)?;
            if lw.beta == 0.0 {
                log::warn!("domain adaptation with zero DA weight");
            }
            Some(r)
        }
    };

    let val_f1 = |m: &Model| -> Result<f64> {
        if val_set.is_empty() {
            Ok(f64::NAN)
        } else {
            Ok(evaluate(&Method::Vae(m), val_set, radar, &cfg.eval)?.f1())
        }
    };
    let divergence = |m: &Model| reference.map(|r| weight_divergence(m, r)).transpose();

    let mut model = model;
    let (fl0, kl0) = inference_losses(&model, val_set, &lw, cfg.batch_size)?;
    let wd0 = divergence(&model)?;
    let b0 = LossBreakdown::compose(fl0, kl0, wd0.unwrap_or(0.0), &lw);
    let mut log = vec![EpochLog {
        epoch: 0,
        focal: b0.focal,
        kl: b0.kl,
        da: b0.da,
        total: b0.total,
        val_f1: val_f1(&model)?,
        weight_divergence: wd0,
    }];
    let mut best = (model.clone(), 0, log[0].val_f1);
    let mut adam = AdamState::default();
    let mut order: Vec<&LabeledExample> = train_set.to_vec();
    let total_steps = cfg.epochs * order.len().div_ceil(cfg.batch_size.max(1));

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch as u64)));
        let (mut sf, mut sk, mut sd, mut nb) = (0.0, 0.0, 0.0, 0usize);
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            let step_seed = derive_seed(cfg.seed ^ 0x5EED, (epoch * 1_000_003 + bi) as u64);
            let parts = shards(batch, cfg.workers);
            let results: Vec<Result<(f64, f64, Option<Gradients>)>> = parts
                .par_iter()
                .enumerate()
                .map(|(si, sh)| shard_loss(&model, sh, batch.len(), &lw, derive_seed(step_seed, si as u64), true))
                .collect();
            let (mut fl, mut kl, mut grads) = (0.0, 0.0, Gradients::default());
            let mut finite = true;
            for r in results {
                let (f, k, g) = r?;
                fl += f;
                kl += k;
                match g {
                    Some(g) => grads.merge(g),
                    None => finite = false,
                }
            }
            let mut da = 0.0;
            if let Some(r) = reference {
                let mut g = Graph::new(true);
                let d = g.da_loss(&model.store, &r.store)?;
                da = g.value(d).item();
                if lw.beta > 0.0 {
                    let dw = g.scale(d, lw.beta);
                    grads.merge(g.backward(dw)?);
                }
            }
            let b = LossBreakdown::compose(fl, kl, da, &lw);
            if !finite || !b.total.is_finite() {
                return Err(Error::NonFinite(format!("loss at epoch {epoch}, batch {bi}")));
            }
            model.store.zero_grads();
            model.store.accumulate(&grads);
            let adam_cfg = AdamConfig {
                lr: cfg.schedule.rate(cfg.adam.lr, adam.t as usize, total_steps),
                ..cfg.adam
            };
            adam_step(&mut model.store, &mut adam, &adam_cfg)
                .map_err(|e| Error::NonFinite(format!("epoch {epoch}, batch {bi}: {e}")))?;
            model.store.round_to_f32();
            model.store.wrap_frequencies();
            sf += fl;
            sk += kl;
            sd += da;
            nb += 1;
        }
        let n = nb.max(1) as f64;
        let b = LossBreakdown::compose(sf / n, sk / n, sd / n, &lw);
        let row = EpochLog {
            epoch,
            focal: b.focal,
            kl: b.kl,
            da: b.da,
            total: b.total,
            val_f1: val_f1(&model)?,
            weight_divergence: divergence(&model)?,
        };
        log::info!(
            "epoch {epoch}: total {:.5} focal {:.5} kl {:.4} val F1 {:.4}",
            row.total,
            row.focal,
            row.kl,
            row.val_f1
        );
        log.push(row);
        if row.val_f1 > best.2 || (best.2.is_nan() && !val_set.is_empty()) {
            best = (model.clone(), epoch, row.val_f1);
        }
        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
                save_checkpoint(&model, &dir.join(format!("epoch-{epoch:04}")), serde_json::json!({ "epoch": epoch }))?;
            }
        }
    }
    if val_set.is_empty() {
        best = (model.clone(), cfg.epochs, f64::NAN);
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join("metrics.csv");
        std::fs::write(&p, log_csv(&log)).map_err(|e| Error::io(&p, e))?;
        let meta = |epoch: usize| serde_json::json!({ "epoch": epoch, "mode": cfg.mode, "seed": cfg.seed });
        save_checkpoint(&best.0, &dir.join("best"), meta(best.1))?;
        save_checkpoint(&model, &dir.join("last"), meta(cfg.epochs))?;
    }
    Ok(TrainOutcome {
        best: best.0,
        best_epoch: best.1,
        last: model,
        log,
    })
}
