use super::{build_model, ArchConfig, LossWeights, Model};
use crate::autograd::{grad_check, GradCheckOptions, GradCheckReport, Graph};
use crate::config::{derive_params, RadarConfig};
use crate::dataset::{label_mask, normalize_frame};
use crate::error::Result;
use crate::sim::{synth_frame, PointTarget};

/// Finite-difference check of the full training objective
/// `focal + theta * kl + beta * da` for a model built from `arch`.
///
/// The input is one noisy single-target frame, the reference model uses a
/// different seed than the checked one, and the fast-time frequencies are
/// moved off the harmonic grid so no gradient vanishes by symmetry.
pub fn total_loss_grad_check(
    arch: &ArchConfig,
    cfg: &RadarConfig,
    weights: &LossWeights,
    seed: u64,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let reference = build_model(arch, seed)?;
    let mut model = build_model(arch, seed.wrapping_add(1))?;
    model.store.value_mut(0).data_mut().iter_mut().for_each(|f| *f += 0.003);
    let d = derive_params(cfg)?;
    let targets = [PointTarget::new(0.4 * d.max_range_m, 0.5, 10.0)];
    let frame = normalize_frame(&synth_frame(&targets, cfg, 20.0, seed)?)?;
    let label = label_mask(cfg, &d, &targets, 3);
    let dropout_seed = seed.wrapping_add(2);
    grad_check(
        &model.store,
        |g: &mut Graph, s| {
            let m = Model {
                arch: arch.clone(),
                store: s.clone(),
            };
            let o = m.forward(g, &[&frame], dropout_seed)?;
            let fl = g.focal_loss(o.prob, &label, weights.gamma, weights.alpha)?;
            let kl = g.kl_loss(o.mu, o.logvar, 1)?;
            let da = g.da_loss(s, &reference.store)?;
            let kl = g.scale(kl, weights.theta);
            let da = g.scale(da, weights.beta);
            let t = g.add(fl, kl)?;
            g.add(t, da)
        },
        opts,
    )
}
