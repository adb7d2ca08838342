use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{label_mask, normalize_frame, range_shift_augment, superpose, CorpusMeta, LabeledExample, Split};
use crate::config::{derive_params, RadarConfig};
use crate::error::{Error, Result};
use crate::sim::{synth_frame, PointTarget};
use crate::util::derive_seed;

/// Simulated stand-in for single-person recordings: one walking target, an
/// optional multipath ghost, optional static clutter, and receiver noise.
/// Only the walking target is labeled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementOptions {
    pub snr_db: f64,
    pub speed_mps: (f64, f64),
    pub amplitude: (f64, f64),
    pub azimuth_deg: (f64, f64),
    /// Keep targets this many range bins away from either end of the grid.
    pub range_margin_bins: f64,
    pub ghost_probability: f64,
    /// Ghost amplitude relative to its target.
    pub ghost_amplitude: (f64, f64),
    /// Extra path length of the ghost (m).
    pub ghost_extra_range_m: (f64, f64),
    pub clutter: Vec<PointTarget>,
    pub label_patch: usize,
    pub seed: u64,
}

impl Default for MeasurementOptions {
    fn default() -> Self {
        Self {
            snr_db: 15.0,
            speed_mps: (0.3, 1.5),
            amplitude: (0.6, 1.0),
            azimuth_deg: (-50.0, 50.0),
            range_margin_bins: 2.0,
            ghost_probability: 0.0,
            ghost_amplitude: (0.3, 0.6),
            ghost_extra_range_m: (0.3, 0.9),
            clutter: Vec::new(),
            label_patch: 3,
            seed: 0,
        }
    }
}

/// `n` raw one-target measurements; provenance is the pool index.
pub fn measurement_pool(cfg: &RadarConfig, n: usize, opts: &MeasurementOptions) -> Result<Vec<LabeledExample>> {
    let d = derive_params(cfg)?;
    let lo = opts.range_margin_bins * d.range_resolution_m;
    let hi = d.max_range_m - opts.range_margin_bins * d.range_resolution_m;
    if !(hi > lo) {
        return Err(Error::InvalidConfig("range margin leaves no room for targets".into()));
    }
    (0..n)
        .into_par_iter()
        .map(|idx| {
            let seed = derive_seed(opts.seed, idx as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let speed = rng.random_range(opts.speed_mps.0..=opts.speed_mps.1);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let target = PointTarget {
                range_m: rng.random_range(lo..hi),
                velocity_mps: sign * speed,
                azimuth_deg: rng.random_range(opts.azimuth_deg.0..=opts.azimuth_deg.1),
                amplitude: rng.random_range(opts.amplitude.0..=opts.amplitude.1),
            };
            let mut scene = vec![target];
            if rng.random_bool(opts.ghost_probability.clamp(0.0, 1.0)) {
                let extra = rng.random_range(opts.ghost_extra_range_m.0..=opts.ghost_extra_range_m.1);
                let ghost_range = target.range_m + extra;
                if ghost_range < d.max_range_m - d.range_resolution_m {
                    scene.push(PointTarget {
                        range_m: ghost_range,
                        velocity_mps: target.velocity_mps,
                        azimuth_deg: rng.random_range(-60.0..=60.0),
                        amplitude: target.amplitude
                            * rng.random_range(opts.ghost_amplitude.0..=opts.ghost_amplitude.1),
                    });
                }
            }
            scene.extend_from_slice(&opts.clutter);
            let mut frame = synth_frame(&scene, cfg, opts.snr_db, seed ^ 0xA5A5)?;
            frame.index = idx as u64;
            Ok(LabeledExample {
                frame,
                label: label_mask(cfg, &d, &[target], opts.label_patch),
                targets: vec![target],
                split: Split::Train,
                provenance: vec![idx as u64],
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSpec {
    /// Examples per target count (index 0 is one target) drawn for train/val.
    pub train_per_count: Vec<usize>,
    /// Examples per target count drawn for test.
    pub test_per_count: Vec<usize>,
    /// Share of the pool reserved for building test examples.
    pub test_pool_fraction: f64,
    pub val_fraction: f64,
    /// Largest whole-bin range shift applied to each member.
    pub max_shift_bins: i32,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            train_per_count: vec![3750; 4],
            test_per_count: vec![200; 4],
            test_pool_fraction: 1.0 / 6.0,
            val_fraction: 0.1,
            max_shift_bins: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub examples: Vec<LabeledExample>,
    pub meta: CorpusMeta,
}

impl Corpus {
    pub fn split(&self, split: Split) -> Vec<&LabeledExample> {
        self.examples.iter().filter(|e| e.split == split).collect()
    }
}

struct Job {
    members: Vec<usize>,
    split: Split,
}

/// Multi-target corpus from a pool of raw one-target examples.
///
/// The pool is partitioned once into a train part and a test part, so no
/// test example shares a member with any train or validation example.
pub fn build_training_corpus(cfg: &RadarConfig, pool: &[LabeledExample], spec: &CorpusSpec) -> Result<Corpus> {
    if pool.is_empty() {
        return Err(Error::InvalidConfig("corpus pool is empty".into()));
    }
    let d = derive_params(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut rng);
    let wants_test = spec.test_per_count.iter().any(|&n| n > 0);
    let n_test = if wants_test {
        ((pool.len() as f64 * spec.test_pool_fraction).round() as usize).clamp(1, pool.len() - 1)
    } else {
        0
    };
    let (test_pool, train_pool) = order.split_at(n_test);

    let mut meta = CorpusMeta::new("superposed");
    let mut jobs = Vec::new();
    let mut plan = |per_count: &[usize], members: &[usize], is_test: bool, rng: &mut ChaCha8Rng| -> Result<()> {
        let mut draws = 0usize;
        for (ci, &count) in per_count.iter().enumerate() {
            let k = ci + 1;
            if count == 0 {
                continue;
            }
            if members.len() < k {
                return Err(Error::InvalidConfig(format!(
                    "pool part of {} members cannot supply {k}-target examples",
                    members.len()
                )));
            }
            let n_val = if is_test { 0 } else { (count as f64 * spec.val_fraction).round() as usize };
            for e in 0..count {
                let chosen: Vec<usize> = members.choose_multiple(rng, k).copied().collect();
                draws += k;
                let split = if is_test {
                    Split::Test
                } else if e < n_val {
                    Split::Val
                } else {
                    Split::Train
                };
                jobs.push(Job { members: chosen, split });
            }
        }
        if draws > members.len() {
            meta.warnings.push(format!(
                "{} split reuses pool members: {draws} draws from {} members",
                if is_test { "test" } else { "train/val" },
                members.len()
            ));
        }
        Ok(())
    };
    plan(&spec.train_per_count, train_pool, false, &mut rng)?;
    plan(&spec.test_per_count, test_pool, true, &mut rng)?;

    let examples = jobs
        .par_iter()
        .enumerate()
        .map(|(idx, job)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed ^ 0xC0_4905, idx as u64));
            let mut parts = Vec::with_capacity(job.members.len());
            for &m in &job.members {
                let ex = &pool[m];
                let (lo, hi) = shift_bounds(ex, &d, spec.max_shift_bins);
                let k = rng.random_range(lo..=hi);
                parts.push(range_shift_augment(ex, k as f64 * d.range_resolution_m, cfg)?);
            }
            let mut combined = superpose(&parts)?;
            combined.frame = normalize_frame(&combined.frame)?;
            combined.frame.index = idx as u64;
            combined.split = job.split;
            combined.provenance = job.members.iter().map(|&m| pool[m].provenance[0]).collect();
            Ok(combined)
        })
        .collect::<Result<Vec<_>>>()?;

    meta.params = serde_json::json!({
        "spec": spec,
        "pool_size": pool.len(),
        "test_pool": test_pool.iter().map(|&i| pool[i].provenance.first().copied().unwrap_or(i as u64)).collect::<Vec<_>>(),
    });
    Ok(Corpus { examples, meta })
}

/// Whole-bin shifts that keep every target of `ex` at least one bin inside the grid.
fn shift_bounds(ex: &LabeledExample, d: &crate::config::DerivedParams, max_bins: i32) -> (i32, i32) {
    let dr = d.range_resolution_m;
    let mut lo = -max_bins;
    let mut hi = max_bins;
    for t in &ex.targets {
        let bin = t.range_m / dr;
        let max_bin = d.max_range_m / dr - 1.0;
        lo = lo.max((1.0 - bin).ceil() as i32);
        hi = hi.min((max_bin - bin).floor() as i32);
    }
    if lo > hi {
        (0, 0)
    } else {
        (lo, hi)
    }
}
