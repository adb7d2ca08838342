//! Checkpoint directory: `checkpoint.json` manifest plus `weights.bin`, the
//! parameters as little-endian `f32` in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::arch::ArchConfig;
use super::model::{build_model, Model};
use crate::autograd::ParamKind;
use crate::dataset::json_error;
use crate::error::{Error, Result};
use crate::util::hex;

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "cfel-radar-checkpoint";
const MANIFEST: &str = "checkpoint.json";
const BLOB: &str = "weights.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub id: String,
    pub layer: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    /// Offset into the blob, in values.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfelTables {
    pub f_ft: Vec<f32>,
    pub f_st: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub arch: ArchConfig,
    pub params: Vec<ParamEntry>,
    pub cfel: CfelTables,
    pub blob_bytes: u64,
    pub blob_sha256: String,
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub fn save_checkpoint(model: &Model, dir: &Path, meta: serde_json::Value) -> Result<CheckpointManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut blob = Vec::with_capacity(model.param_count() * 4);
    let mut params = Vec::with_capacity(model.store.len());
    let mut offset = 0;
    for p in model.store.iter() {
        params.push(ParamEntry {
            id: p.id.clone(),
            layer: p.layer.clone(),
            kind: p.kind,
            shape: p.value.shape().to_vec(),
            offset,
        });
        offset += p.value.len();
        for &v in p.value.data() {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let f32s = |i: usize| model.store.value(i).data().iter().map(|&v| v as f32).collect();
    let manifest = CheckpointManifest {
        format: FORMAT_TAG.into(),
        version: CHECKPOINT_VERSION,
        arch: model.arch.clone(),
        params,
        cfel: CfelTables { f_ft: f32s(0), f_st: f32s(1) },
        blob_bytes: blob.len() as u64,
        blob_sha256: hex(&Sha256::digest(&blob)),
        meta,
    };
    let blob_path = dir.join(BLOB);
    fs::write(&blob_path, &blob).map_err(|e| Error::io(&blob_path, e))?;
    let mpath = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<(Model, CheckpointManifest)> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| json_error(&mpath, &text, e))?;
    let tag = value.get("format").and_then(|v| v.as_str()).unwrap_or("");
    if tag != FORMAT_TAG {
        return Err(Error::Integrity {
            path: mpath,
            detail: format!("not a checkpoint manifest (format tag `{tag}`)"),
        });
    }
    let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            path: mpath,
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let manifest: CheckpointManifest = serde_json::from_value(value).map_err(|e| Error::Parse {
        path: mpath.clone(),
        line: 0,
        detail: e.to_string(),
    })?;
    let integrity = |detail: String| Error::Integrity {
        path: mpath.clone(),
        detail,
    };

    let mut model = build_model(&manifest.arch, 0)?;
    let expected = model.param_count() as u64 * 4;
    if manifest.blob_bytes != expected || manifest.params.len() != model.store.len() {
        return Err(integrity(format!(
            "architecture needs {} parameters in {expected} bytes, manifest declares {} in {}",
            model.store.len(),
            manifest.params.len(),
            manifest.blob_bytes
        )));
    }
    let bpath = dir.join(BLOB);
    let blob = fs::read(&bpath).map_err(|e| Error::io(&bpath, e))?;
    let found = blob.len() as u64;
    if found < expected {
        return Err(Error::Truncated {
            path: bpath,
            expected,
            found,
        });
    }
    if found > expected {
        return Err(Error::Integrity {
            path: bpath,
            detail: format!("{} trailing bytes", found - expected),
        });
    }
    if hex(&Sha256::digest(&blob)) != manifest.blob_sha256 {
        return Err(Error::Checksum { path: bpath });
    }
    let values: Vec<f32> = blob.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    let mut offset = 0;
    for (i, e) in manifest.params.iter().enumerate() {
        let p = model.store.get(i);
        if p.id != e.id || p.layer != e.layer || p.kind != e.kind || p.value.shape() != e.shape.as_slice() || e.offset != offset {
            return Err(integrity(format!("parameter {i} `{}` does not match the architecture", e.id)));
        }
        let n = p.value.len();
        let dst = model.store.value_mut(i).data_mut();
        for (d, &v) in dst.iter_mut().zip(&values[offset..offset + n]) {
            *d = v as f64;
        }
        offset += n;
    }
    let tables_agree = |i: usize, t: &[f32]| {
        let v = model.store.value(i).data();
        v.len() == t.len() && v.iter().zip(t).all(|(a, &b)| (*a as f32).to_bits() == b.to_bits())
    };
    if !tables_agree(0, &manifest.cfel.f_ft) || !tables_agree(1, &manifest.cfel.f_st) {
        return Err(integrity("CFEL frequency tables disagree with the weight blob".into()));
    }
    Ok((model, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vae::model::tests::tiny_arch;
    use crate::vae::AntennaMode;

    fn saved() -> (tempfile::TempDir, Model) {
        let dir = tempfile::tempdir().unwrap();
        let mut m = build_model(&tiny_arch(AntennaMode::Shared), 7).unwrap();
        m.store.value_mut(0).data_mut()[3] = 0.123_456_79_f32 as f64;
        save_checkpoint(&m, dir.path(), serde_json::json!({"epoch": 3})).unwrap();
        (dir, m)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (dir, m) = saved();
        let (back, man) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(man.meta["epoch"], 3);
        let bits = |m: &Model| m.store.iter().flat_map(|p| p.value.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&m));
    }

    #[test]
    fn truncated_blob() {
        let (dir, _) = saved();
        let p = dir.path().join(BLOB);
        let b = fs::read(&p).unwrap();
        fs::write(&p, &b[..b.len() - 3]).unwrap();
        assert_eq!(load_checkpoint(dir.path()).unwrap_err().category(), "truncated");
    }

    #[test]
    fn flipped_byte() {
        let (dir, _) = saved();
        let p = dir.path().join(BLOB);
        let mut b = fs::read(&p).unwrap();
        b[10] ^= 0x40;
        fs::write(&p, &b).unwrap();
        assert_eq!(load_checkpoint(dir.path()).unwrap_err().category(), "checksum");
    }

    #[test]
    fn bad_manifests() {
        let (dir, _) = saved();
        let p = dir.path().join(MANIFEST);
        let text = fs::read_to_string(&p).unwrap();
        fs::write(&p, &text[..text.len() / 2]).unwrap();
        assert_eq!(load_checkpoint(dir.path()).unwrap_err().category(), "truncated");
        fs::write(&p, text.replace("\"version\": 1", "\"version\": 9")).unwrap();
        assert_eq!(load_checkpoint(dir.path()).unwrap_err().category(), "version");
        fs::write(&p, text.replace("enc0.conv_a.w", "enc0.conv_x.w")).unwrap();
        assert_eq!(load_checkpoint(dir.path()).unwrap_err().category(), "integrity");
    }

    #[test]
    fn missing_files_are_io_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(load_checkpoint(dir.path()).unwrap_err().category(), "io");
    }
}
