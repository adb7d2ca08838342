//! Labeled examples, their on-disk container, and corpus construction.

mod augment;
mod container;
mod corpus;

pub use augment::range_shift_augment;
pub(crate) use container::json_error;
pub use container::{load_dataset, save_dataset, DatasetManifest, RecordEntry, FORMAT_VERSION};
pub use corpus::{build_training_corpus, measurement_pool, Corpus, CorpusSpec, MeasurementOptions};

use serde::{Deserialize, Serialize};

use crate::config::{DerivedParams, RadarConfig};
use crate::error::{Error, Result};
use crate::sim::{min_max, Frame, PointTarget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub frame: Frame,
    /// Binary mask `[n_range_bins x n_angle_bins]`, range-major.
    pub label: Vec<u8>,
    /// Ground truth, when known.
    pub targets: Vec<PointTarget>,
    pub split: Split,
    /// Pool members this example was built from.
    pub provenance: Vec<u64>,
}

/// Extra corpus-level information stored in the manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub kind: String,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl CorpusMeta {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            ..Self::default()
        }
    }
}

/// Grid bin nearest to a physical position, clamped to the grid.
pub fn target_bin(cfg: &RadarConfig, d: &DerivedParams, t: &PointTarget) -> (usize, usize) {
    let i = (t.range_m / d.range_resolution_m).round().max(0.0) as usize;
    let j = cfg.bin_at_angle(t.azimuth_deg).round().max(0.0) as usize;
    (i.min(cfg.n_range_bins - 1), j.min(cfg.n_angle_bins - 1))
}

/// `patch x patch` foreground blob per target, centered on its nearest bin.
pub fn label_mask(cfg: &RadarConfig, d: &DerivedParams, targets: &[PointTarget], patch: usize) -> Vec<u8> {
    let (nr, na) = (cfg.n_range_bins, cfg.n_angle_bins);
    let mut mask = vec![0u8; nr * na];
    let half = (patch.max(1) - 1) as isize / 2;
    for t in targets {
        let (ci, cj) = target_bin(cfg, d, t);
        for di in -half..=half {
            for dj in -half..=half {
                let (i, j) = (ci as isize + di, cj as isize + dj);
                if i >= 0 && j >= 0 && (i as usize) < nr && (j as usize) < na {
                    mask[i as usize * na + j as usize] = 1;
                }
            }
        }
    }
    mask
}

/// Per-frame affine map sending the minimum to 0 and the maximum to 1.
pub fn normalize_frame(frame: &Frame) -> Result<Frame> {
    let (lo, hi) = min_max(&frame.data);
    if !(hi > lo) {
        return Err(Error::InvalidConfig(
            "cannot normalize a constant frame".into(),
        ));
    }
    let (lo, span) = (lo as f64, hi as f64 - lo as f64);
    let mut out = frame.clone();
    for v in out.data.iter_mut() {
        *v = ((*v as f64 - lo) / span) as f32;
    }
    out.normalized = true;
    Ok(out)
}

/// Sum of raw frames with the union of their labels.
pub fn superpose(examples: &[LabeledExample]) -> Result<LabeledExample> {
    let first = examples
        .first()
        .ok_or_else(|| Error::InvalidConfig("superpose needs at least one example".into()))?;
    if examples.len() == 1 {
        return Ok(first.clone());
    }
    if examples.iter().any(|e| e.frame.normalized) {
        return Err(Error::InvalidConfig(
            "superpose expects raw (un-normalized) frames".into(),
        ));
    }
    let mut acc = vec![0.0f64; first.frame.data.len()];
    let mut label = vec![0u8; first.label.len()];
    let mut out = first.clone();
    out.targets.clear();
    out.provenance.clear();
    for e in examples {
        if !e.frame.same_dims(&first.frame) || e.label.len() != label.len() {
            return Err(Error::shape("superpose", "examples differ in frame or label dimensions"));
        }
        for (a, &v) in acc.iter_mut().zip(&e.frame.data) {
            *a += v as f64;
        }
        for (l, &v) in label.iter_mut().zip(&e.label) {
            *l |= v;
        }
        out.targets.extend_from_slice(&e.targets);
        out.provenance.extend_from_slice(&e.provenance);
    }
    for (dst, a) in out.frame.data.iter_mut().zip(acc) {
        *dst = a as f32;
    }
    out.label = label;
    Ok(out)
}
