//! Dataset container: `manifest.json` plus a `data.bin` payload.
//!
//! Each record in the payload is the frame as little-endian `f32`
//! (`[n_samples x n_chirps x n_rx]`, fast time fastest) followed by the
//! `u8` label mask (`[n_range_bins x n_angle_bins]`, range-major).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CorpusMeta, LabeledExample, Split};
use crate::config::RadarConfig;
use crate::error::{Error, Result};
use crate::sim::{Frame, PointTarget};
use crate::util::hex;

pub const FORMAT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "cfel-radar-dataset";
const MANIFEST: &str = "manifest.json";
const PAYLOAD: &str = "data.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub offset: u64,
    pub split: Split,
    pub normalized: bool,
    pub frame_index: u64,
    pub targets: Vec<PointTarget>,
    pub provenance: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub config: RadarConfig,
    pub example_count: usize,
    pub frame_values: usize,
    pub mask_values: usize,
    pub payload_bytes: u64,
    pub payload_sha256: String,
    pub meta: CorpusMeta,
    pub records: Vec<RecordEntry>,
}

impl DatasetManifest {
    pub fn record_bytes(&self) -> u64 {
        (self.frame_values * 4 + self.mask_values) as u64
    }

    pub fn split_counts(&self) -> (usize, usize, usize) {
        self.records.iter().fold((0, 0, 0), |(a, b, c), r| match r.split {
            Split::Train => (a + 1, b, c),
            Split::Val => (a, b + 1, c),
            Split::Test => (a, b, c + 1),
        })
    }
}

pub fn save_dataset(
    dir: &Path,
    cfg: &RadarConfig,
    examples: &[LabeledExample],
    meta: &CorpusMeta,
) -> Result<DatasetManifest> {
    cfg.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let frame_values = cfg.frame_len();
    let mask_values = cfg.grid_len();
    let record_bytes = frame_values * 4 + mask_values;
    let mut payload = Vec::with_capacity(record_bytes * examples.len());
    let mut records = Vec::with_capacity(examples.len());
    for ex in examples {
        ex.frame.check_dims(cfg)?;
        if ex.label.len() != mask_values {
            return Err(Error::shape(
                "save_dataset",
                format!("label has {} values, grid has {mask_values}", ex.label.len()),
            ));
        }
        records.push(RecordEntry {
            offset: payload.len() as u64,
            split: ex.split,
            normalized: ex.frame.normalized,
            frame_index: ex.frame.index,
            targets: ex.targets.clone(),
            provenance: ex.provenance.clone(),
        });
        for v in &ex.frame.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        payload.extend_from_slice(&ex.label);
    }
    let manifest = DatasetManifest {
        format: FORMAT_TAG.to_string(),
        version: FORMAT_VERSION,
        config: cfg.clone(),
        example_count: examples.len(),
        frame_values,
        mask_values,
        payload_bytes: payload.len() as u64,
        payload_sha256: hex(&Sha256::digest(&payload)),
        meta: meta.clone(),
        records,
    };
    let payload_path = dir.join(PAYLOAD);
    fs::write(&payload_path, &payload).map_err(|e| Error::io(&payload_path, e))?;
    let manifest_path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}

pub fn load_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<LabeledExample>)> {
    let manifest_path = dir.join(MANIFEST);
    let manifest = read_manifest(&manifest_path)?;
    let payload_path = dir.join(PAYLOAD);
    let payload = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    validate(&manifest, &manifest_path, &payload, &payload_path)?;

    let cfg = &manifest.config;
    let mut examples = Vec::with_capacity(manifest.example_count);
    for rec in &manifest.records {
        let start = rec.offset as usize;
        let frame_end = start + manifest.frame_values * 4;
        let data = payload[start..frame_end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let label = payload[frame_end..frame_end + manifest.mask_values].to_vec();
        examples.push(LabeledExample {
            frame: Frame {
                n_samples: cfg.n_samples,
                n_chirps: cfg.n_chirps,
                n_rx: cfg.n_rx,
                data,
                normalized: rec.normalized,
                index: rec.frame_index,
            },
            label,
            targets: rec.targets.clone(),
            split: rec.split,
            provenance: rec.provenance.clone(),
        });
    }
    Ok((manifest, examples))
}

fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| json_error(path, &text, e))?;
    let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    let tag = value.get("format").and_then(|v| v.as_str()).unwrap_or("");
    if tag != FORMAT_TAG {
        return Err(Error::Integrity {
            path: path.to_path_buf(),
            detail: format!("not a dataset manifest (format tag `{tag}`)"),
        });
    }
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        detail: e.to_string(),
    })
}

pub(crate) fn json_error(path: &Path, text: &str, e: serde_json::Error) -> Error {
    if e.is_eof() {
        Error::Truncated {
            path: path.to_path_buf(),
            expected: text.len() as u64 + 1,
            found: text.len() as u64,
        }
    } else {
        Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            detail: e.to_string(),
        }
    }
}

fn validate(m: &DatasetManifest, manifest_path: &Path, payload: &[u8], payload_path: &Path) -> Result<()> {
    let integrity = |detail: String| Error::Integrity {
        path: manifest_path.to_path_buf(),
        detail,
    };
    m.config.validate()?;
    if m.frame_values != m.config.frame_len() || m.mask_values != m.config.grid_len() {
        return Err(integrity("record dimensions disagree with config".into()));
    }
    if m.records.len() != m.example_count {
        return Err(integrity(format!(
            "manifest lists {} records but declares {} examples",
            m.records.len(),
            m.example_count
        )));
    }
    let expected = m.record_bytes() * m.example_count as u64;
    if m.payload_bytes != expected {
        return Err(integrity(format!(
            "declared payload of {} bytes, {} examples need {expected}",
            m.payload_bytes, m.example_count
        )));
    }
    let found = payload.len() as u64;
    if found < expected {
        return Err(Error::Truncated {
            path: PathBuf::from(payload_path),
            expected,
            found,
        });
    }
    if found > expected {
        return Err(Error::Integrity {
            path: payload_path.to_path_buf(),
            detail: format!("{} trailing bytes after the last record", found - expected),
        });
    }
    for (i, r) in m.records.iter().enumerate() {
        if r.offset != i as u64 * m.record_bytes() {
            return Err(integrity(format!("record {i} has offset {}", r.offset)));
        }
    }
    if hex(&Sha256::digest(payload)) != m.payload_sha256 {
        return Err(Error::Checksum {
            path: payload_path.to_path_buf(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::derive_params;
    use crate::dataset::label_mask;
    use crate::sim::synth_frame;

    fn examples(cfg: &RadarConfig, n: usize) -> Vec<LabeledExample> {
        let d = derive_params(cfg).unwrap();
        (0..n)
            .map(|i| {
                let t = PointTarget::new(0.3 + 0.15 * i as f64, 0.1 * i as f64, -40.0 + 8.0 * i as f64);
                let mut frame = synth_frame(&[t], cfg, 12.0, i as u64).unwrap();
                frame.index = i as u64;
                LabeledExample {
                    frame,
                    label: label_mask(cfg, &d, &[t], 3),
                    targets: vec![t],
                    split: [Split::Train, Split::Val, Split::Test][i % 3],
                    provenance: vec![i as u64, 100 + i as u64],
                }
            })
            .collect()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = RadarConfig::desk();
        let dir = tempfile::tempdir().unwrap();
        let ex = examples(&cfg, 10);
        let m = save_dataset(dir.path(), &cfg, &ex, &CorpusMeta::new("test")).unwrap();
        let (m2, back) = load_dataset(dir.path()).unwrap();
        assert_eq!(m, m2);
        assert_eq!(back, ex);
        assert_eq!(m.split_counts(), (4, 3, 3));
    }

    #[test]
    fn truncated_payload_is_reported_as_truncation() {
        let cfg = RadarConfig::desk();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &cfg, &examples(&cfg, 4), &CorpusMeta::new("t")).unwrap();
        let p = dir.path().join(PAYLOAD);
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 100]).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Truncated { .. })));
    }

    #[test]
    fn truncated_manifest_is_reported_as_truncation() {
        let cfg = RadarConfig::desk();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &cfg, &examples(&cfg, 2), &CorpusMeta::new("t")).unwrap();
        let p = dir.path().join(MANIFEST);
        let text = fs::read_to_string(&p).unwrap();
        fs::write(&p, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Truncated { .. })));
    }

    #[test]
    fn flipped_byte_fails_checksum() {
        let cfg = RadarConfig::desk();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &cfg, &examples(&cfg, 3), &CorpusMeta::new("t")).unwrap();
        let p = dir.path().join(PAYLOAD);
        let mut bytes = fs::read(&p).unwrap();
        bytes[17] ^= 0x40;
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Checksum { .. })));
    }

    #[test]
    fn count_mismatch_is_integrity_error() {
        let cfg = RadarConfig::desk();
        let dir = tempfile::tempdir().unwrap();
        let mut m = save_dataset(dir.path(), &cfg, &examples(&cfg, 3), &CorpusMeta::new("t")).unwrap();
        m.example_count = 4;
        fs::write(dir.path().join(MANIFEST), serde_json::to_string(&m).unwrap()).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Integrity { .. })));
    }

    #[test]
    fn version_mismatch_is_reported() {
        let cfg = RadarConfig::desk();
        let dir = tempfile::tempdir().unwrap();
        let mut m = save_dataset(dir.path(), &cfg, &examples(&cfg, 1), &CorpusMeta::new("t")).unwrap();
        m.version = 99;
        fs::write(dir.path().join(MANIFEST), serde_json::to_string(&m).unwrap()).unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(Error::Version { found: 99, .. })
        ));
    }
}
