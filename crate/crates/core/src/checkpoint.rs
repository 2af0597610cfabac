//! Checkpoint directories: `manifest.json` plus `params.bin` holding
//! little-endian `f32` tensors concatenated in index order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT_VERSION: &str = "1";
const PARAMS_FILE: &str = "params.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Byte offset into `params.bin`.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: String,
    /// `"translator"` or `"classifier"`.
    pub kind: String,
    pub config: serde_json::Value,
    pub image_size: usize,
    pub step_count: usize,
    pub tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint(
    dir: &Path,
    kind: &str,
    config: serde_json::Value,
    image_size: usize,
    step_count: usize,
    params: &ParamSet,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut bytes = Vec::with_capacity(params.num_scalars() * 4);
    let mut tensors = Vec::with_capacity(params.len());
    for (name, t) in params.iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            dtype: "f32".into(),
            offset: bytes.len(),
        });
        for &v in t.data() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_FORMAT_VERSION.into(),
        kind: kind.into(),
        config,
        image_size,
        step_count,
        tensors,
    };
    let mpath = dir.join("manifest.json");
    fs::write(&mpath, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&mpath, e))?;
    let ppath = dir.join(PARAMS_FILE);
    fs::write(&ppath, bytes).map_err(|e| Error::io(&ppath, e))
}

pub fn load_checkpoint(dir: &Path, expected_kind: &str) -> Result<(CheckpointManifest, ParamSet)> {
    let mpath = dir.join("manifest.json");
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| Error::format(&mpath, e.to_string()))?;
    if manifest.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::format(
            &mpath,
            format!("unknown checkpoint format version {:?}", manifest.format_version),
        ));
    }
    if manifest.kind != expected_kind {
        return Err(Error::format(
            &mpath,
            format!("checkpoint holds a {}, expected a {expected_kind}", manifest.kind),
        ));
    }
    let ppath = dir.join(PARAMS_FILE);
    let bytes = fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;
    let mut params = ParamSet::new();
    let mut expected_offset = 0;
    for entry in &manifest.tensors {
        if entry.dtype != "f32" {
            return Err(Error::format(&mpath, format!("unsupported dtype {}", entry.dtype)));
        }
        if entry.offset != expected_offset {
            return Err(Error::format(&mpath, format!("tensor {} has offset {}, expected {expected_offset}", entry.name, entry.offset)));
        }
        let n: usize = entry.shape.iter().product();
        let end = entry.offset + 4 * n;
        let chunk = bytes
            .get(entry.offset..end)
            .ok_or_else(|| Error::format(&ppath, format!("truncated data for {}", entry.name)))?;
        let data = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        params.push(entry.name.clone(), Tensor::from_vec(&entry.shape, data));
        expected_offset = end;
    }
    if expected_offset != bytes.len() {
        return Err(Error::format(&ppath, "trailing bytes after last tensor"));
    }
    Ok((manifest, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_version_check() {
        let mut ps = ParamSet::new();
        ps.push("a.weight", Tensor::from_vec(&[2, 2], vec![0.5, -1.25, 3.0, 0.0]));
        ps.push("a.bias", Tensor::from_vec(&[2], vec![1.0, 2.0]));
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), "classifier", serde_json::json!({"k": 1}), 16, 3, &ps).unwrap();
        let (m, back) = load_checkpoint(dir.path(), "classifier").unwrap();
        assert_eq!(back, ps);
        assert_eq!(m.step_count, 3);
        assert_eq!(m.tensors[1].offset, 16);
        assert!(load_checkpoint(dir.path(), "translator").is_err());

        let path = dir.path().join("manifest.json");
        let text = fs::read_to_string(&path).unwrap().replace("\"format_version\": \"1\"", "\"format_version\": \"2\"");
        fs::write(&path, text).unwrap();
        let err = load_checkpoint(dir.path(), "classifier").unwrap_err();
        assert!(err.to_string().contains("unknown checkpoint format version"), "{err}");
    }
}
