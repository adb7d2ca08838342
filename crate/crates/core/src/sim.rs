//! Point-target beat-signal synthesis.
//!
//! Frames are generated directly in the dechirped (IF) domain: every target
//! contributes one real cosine whose fast-time frequency encodes range, whose
//! chirp-to-chirp phase progression encodes radial velocity, and whose
//! antenna-to-antenna phase offset encodes azimuth.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{derive_params, DerivedParams, RadarConfig, SPEED_OF_LIGHT};
use crate::dataset::{self, DatasetManifest, LabeledExample, Split};
use crate::error::{Error, Result};
use crate::util::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointTarget {
    pub range_m: f64,
    pub velocity_mps: f64,
    pub azimuth_deg: f64,
    pub amplitude: f64,
}

impl PointTarget {
    pub fn new(range_m: f64, velocity_mps: f64, azimuth_deg: f64) -> Self {
        Self {
            range_m,
            velocity_mps,
            azimuth_deg,
            amplitude: 1.0,
        }
    }

    pub fn validate(&self, derived: &DerivedParams) -> Result<()> {
        if !(self.range_m > 0.0 && self.range_m <= derived.max_range_m + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "target range {} m outside (0, {}]",
                self.range_m, derived.max_range_m
            )));
        }
        if !(self.azimuth_deg.abs() <= 90.0) {
            return Err(Error::InvalidConfig(format!(
                "target azimuth {} deg outside [-90, 90]",
                self.azimuth_deg
            )));
        }
        if !(self.amplitude > 0.0) || !self.velocity_mps.is_finite() {
            return Err(Error::InvalidConfig(
                "target amplitude must be positive and velocity finite".into(),
            ));
        }
        Ok(())
    }
}

/// Raw ADC cube, `[n_samples x n_chirps x n_rx]` with fast time fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub n_samples: usize,
    pub n_chirps: usize,
    pub n_rx: usize,
    pub data: Vec<f32>,
    pub normalized: bool,
    pub index: u64,
}

impl Frame {
    pub fn zeros(cfg: &RadarConfig) -> Self {
        Self {
            n_samples: cfg.n_samples,
            n_chirps: cfg.n_chirps,
            n_rx: cfg.n_rx,
            data: vec![0.0; cfg.frame_len()],
            normalized: false,
            index: 0,
        }
    }

    #[inline]
    pub fn offset(&self, m: usize, n: usize, rx: usize) -> usize {
        m + self.n_samples * (n + self.n_chirps * rx)
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize, rx: usize) -> f64 {
        self.data[self.offset(m, n, rx)] as f64
    }

    pub fn check_dims(&self, cfg: &RadarConfig) -> Result<()> {
        if self.n_samples != cfg.n_samples
            || self.n_chirps != cfg.n_chirps
            || self.n_rx != cfg.n_rx
            || self.data.len() != cfg.frame_len()
        {
            return Err(Error::shape(
                "frame",
                format!(
                    "frame is {}x{}x{} ({} values), config expects {}x{}x{}",
                    self.n_samples,
                    self.n_chirps,
                    self.n_rx,
                    self.data.len(),
                    cfg.n_samples,
                    cfg.n_chirps,
                    cfg.n_rx
                ),
            ));
        }
        Ok(())
    }

    pub fn same_dims(&self, other: &Frame) -> bool {
        self.n_samples == other.n_samples
            && self.n_chirps == other.n_chirps
            && self.n_rx == other.n_rx
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Phase of one target at one sample, in radians (before the cosine).
#[inline]
fn target_phase(t: &PointTarget, d: &DerivedParams, cfg: &RadarConfig, m: usize, n: usize, rx: usize) -> f64 {
    let t_ft = m as f64 * cfg.chirp_time_s / cfg.n_samples as f64;
    let t_st = n as f64 * cfg.chirp_repetition_s;
    let beat = 2.0 * d.bandwidth_hz * t.range_m / (SPEED_OF_LIGHT * cfg.chirp_time_s);
    let carrier = 2.0 * d.center_freq_hz * (t.range_m + t.velocity_mps * t_st) / SPEED_OF_LIGHT;
    2.0 * PI * (beat * t_ft + carrier) + rx as f64 * antenna_phase(t.azimuth_deg, cfg, d)
}

/// Inter-antenna phase step `2 pi d sin(theta) / lambda`.
pub fn antenna_phase(azimuth_deg: f64, cfg: &RadarConfig, d: &DerivedParams) -> f64 {
    2.0 * PI * cfg.antenna_spacing_m * azimuth_deg.to_radians().sin() / d.wavelength_m
}

/// Noise-free IF sample of a single target.
pub fn target_sample(t: &PointTarget, cfg: &RadarConfig, m: usize, n: usize, rx: usize) -> Result<f64> {
    let d = derive_params(cfg)?;
    if m >= cfg.n_samples || n >= cfg.n_chirps || rx >= cfg.n_rx {
        return Err(Error::shape(
            "target_sample",
            format!("index ({m}, {n}, {rx}) outside {}x{}x{}", cfg.n_samples, cfg.n_chirps, cfg.n_rx),
        ));
    }
    Ok(t.amplitude * target_phase(t, &d, cfg, m, n, rx).cos())
}

/// Sum of target returns plus white Gaussian noise.
///
/// `snr_db` is the per-sample SNR of the strongest target (sinusoid power
/// `A^2/2` over noise variance). `f64::INFINITY` disables noise. With no
/// targets the noise is referenced to unit amplitude.
pub fn synth_frame(targets: &[PointTarget], cfg: &RadarConfig, snr_db: f64, seed: u64) -> Result<Frame> {
    let d = derive_params(cfg)?;
    for t in targets {
        t.validate(&d)?;
    }
    let mut acc = vec![0.0f64; cfg.frame_len()];
    for t in targets {
        accumulate_target(&mut acc, t, cfg, &d);
    }
    if snr_db.is_finite() {
        let a_max = targets.iter().map(|t| t.amplitude).fold(0.0, f64::max);
        let a_ref = if a_max > 0.0 { a_max } else { 1.0 };
        let sigma = a_ref / (2.0 * 10f64.powf(snr_db / 10.0)).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in acc.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *v += sigma * e;
        }
    } else if snr_db.is_nan() {
        return Err(Error::InvalidConfig("snr_db is NaN".into()));
    }
    let mut frame = Frame::zeros(cfg);
    for (dst, src) in frame.data.iter_mut().zip(&acc) {
        *dst = *src as f32;
    }
    Ok(frame)
}

fn accumulate_target(acc: &mut [f64], t: &PointTarget, cfg: &RadarConfig, d: &DerivedParams) {
    let ns = cfg.n_samples;
    let nc = cfg.n_chirps;
    for rx in 0..cfg.n_rx {
        for n in 0..nc {
            let base = ns * (n + nc * rx);
            for m in 0..ns {
                acc[base + m] += t.amplitude * target_phase(t, d, cfg, m, n, rx).cos();
            }
        }
    }
}

/// Uniform quantizer with `2^bits` levels spanning the frame's min..max.
pub fn quantize_adc(frame: &Frame, bits: u32) -> Result<Frame> {
    if !(2..=16).contains(&bits) {
        return Err(Error::InvalidConfig(format!("adc bits {bits} outside [2, 16]")));
    }
    let (lo, hi) = min_max(&frame.data);
    let mut out = frame.clone();
    let span = hi as f64 - lo as f64;
    if !(span > 0.0) {
        out.data.iter_mut().for_each(|v| *v = lo);
        return Ok(out);
    }
    let levels = ((1u32 << bits) - 1) as f64;
    let step = span / levels;
    for v in out.data.iter_mut() {
        let q = ((*v as f64 - lo as f64) / span * levels).round();
        *v = (lo as f64 + q * step) as f32;
    }
    Ok(out)
}

pub(crate) fn min_max(data: &[f32]) -> (f32, f32) {
    data.iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Options for the point-target grid corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridOptions {
    pub snr_db: f64,
    /// Largest |v| drawn per target; 0 keeps every target static.
    pub max_speed_mps: f64,
    pub quantize_bits: Option<u32>,
    pub label_patch: usize,
    pub seed: u64,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            snr_db: f64::INFINITY,
            max_speed_mps: 0.0,
            quantize_bits: None,
            label_patch: 3,
            seed: 0,
        }
    }
}

/// Target placed at grid cell `(i, j)`: range `(i + 1) * dr`, azimuth on the angle grid.
pub fn grid_target(cfg: &RadarConfig, d: &DerivedParams, i: usize, j: usize) -> PointTarget {
    PointTarget::new((i + 1) as f64 * d.range_resolution_m, 0.0, cfg.angle_grid_deg()[j])
}

/// One labeled single-target example per range-angle grid cell.
pub fn grid_examples(cfg: &RadarConfig, opts: &GridOptions) -> Result<Vec<LabeledExample>> {
    let d = derive_params(cfg)?;
    let cells: Vec<(usize, usize)> = (0..cfg.n_range_bins)
        .flat_map(|i| (0..cfg.n_angle_bins).map(move |j| (i, j)))
        .collect();
    cells
        .par_iter()
        .enumerate()
        .map(|(idx, &(i, j))| {
            let seed = derive_seed(opts.seed, idx as u64);
            let mut t = grid_target(cfg, &d, i, j);
            if opts.max_speed_mps > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
                t.velocity_mps = rng.random_range(-opts.max_speed_mps..=opts.max_speed_mps);
            }
            let mut frame = synth_frame(&[t], cfg, opts.snr_db, seed)?;
            if let Some(bits) = opts.quantize_bits {
                frame = quantize_adc(&frame, bits)?;
            }
            frame.index = idx as u64;
            let label = dataset::label_mask(cfg, &d, &[t], opts.label_patch);
            Ok(LabeledExample {
                frame,
                label,
                targets: vec![t],
                split: Split::Train,
                provenance: vec![idx as u64],
            })
        })
        .collect()
}

/// Writes the grid corpus to `out_dir` and returns its manifest.
pub fn generate_grid_dataset(cfg: &RadarConfig, opts: &GridOptions, out_dir: &Path) -> Result<DatasetManifest> {
    let examples = grid_examples(cfg, opts)?;
    let mut meta = dataset::CorpusMeta::new("grid");
    meta.params = serde_json::to_value(opts).unwrap_or_default();
    dataset::save_dataset(out_dir, cfg, &examples, &meta)
}
