//! Checkpoint files: a JSON manifest next to a raw little-endian `f32` blob.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Float, ModelConfig, ModelParams};
use crate::{Error, Result};

const FORMAT: &str = "urltran-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    /// Byte offset into the blob.
    offset: usize,
    /// Length in bytes.
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    config: ModelConfig,
    dtype: String,
    byte_order: String,
    blob: String,
    tensors: Vec<TensorEntry>,
}

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

/// Writes `manifest` (JSON) and a sibling `.bin` blob. Values are stored as `f32`.
pub fn save_checkpoint<T: Float>(p: &ModelParams<T>, manifest: &Path) -> Result<()> {
    let blob = blob_path(manifest);
    let mut bytes = Vec::with_capacity(p.num_parameters() * 4);
    let mut tensors = Vec::new();
    for (name, t) in p.tensors() {
        let offset = bytes.len();
        for v in t.iter() {
            bytes.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        tensors.push(TensorEntry {
            name,
            shape: t.shape().to_vec(),
            dtype: "f32".into(),
            offset,
            len: bytes.len() - offset,
        });
    }
    let m = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        config: p.config.clone(),
        dtype: "f32".into(),
        byte_order: "little".into(),
        blob: blob
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        tensors,
    };
    std::fs::write(&blob, &bytes).map_err(|e| Error::io(&blob, e))?;
    let text = serde_json::to_string_pretty(&m)? + "\n";
    std::fs::write(manifest, text).map_err(|e| Error::io(manifest, e))
}

/// Reads a checkpoint, checking every tensor's name and shape against its config.
pub fn load_checkpoint(manifest: &Path) -> Result<ModelParams<f32>> {
    let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.format != FORMAT || m.version != VERSION {
        return Err(Error::Format(format!("not a version {VERSION} {FORMAT} manifest")));
    }
    if m.dtype != "f32" || m.byte_order != "little" {
        return Err(Error::Format(format!("unsupported encoding {} / {}", m.dtype, m.byte_order)));
    }
    m.config.validate()?;
    let blob = manifest.with_file_name(&m.blob);
    let bytes = std::fs::read(&blob).map_err(|e| Error::io(&blob, e))?;
    let mut p = ModelParams::<f32>::zeros(&m.config);
    let mut slots = p.tensors_mut();
    if slots.len() != m.tensors.len() {
        return Err(Error::ShapeMismatch(format!(
            "manifest lists {} tensors, config implies {}",
            m.tensors.len(),
            slots.len()
        )));
    }
    for ((name, dst), e) in slots.iter_mut().zip(&m.tensors) {
        if *name != e.name || dst.shape() != e.shape.as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "tensor {} {:?} where {} {:?} expected",
                e.name,
                e.shape,
                name,
                dst.shape()
            )));
        }
        if e.len != dst.len() * 4 || e.offset + e.len > bytes.len() {
            return Err(Error::ShapeMismatch(format!("tensor {} has bad extent", e.name)));
        }
        let src = &bytes[e.offset..e.offset + e.len];
        for (v, c) in dst.iter_mut().zip(src.chunks_exact(4)) {
            *v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        }
    }
    drop(slots);
    p.check_finite()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::init_params;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let cfg = ModelConfig {
            type_vocab_size: 2,
            ..ModelConfig::desk(30)
        };
        let p: ModelParams<f32> = init_params(&cfg, 5).unwrap();
        save_checkpoint(&p, &path).unwrap();
        assert!(dir.path().join("model.bin").exists());
        assert_eq!(load_checkpoint(&path).unwrap(), p);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let p: ModelParams<f32> = init_params(&ModelConfig::desk(30), 5).unwrap();
        save_checkpoint(&p, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let edited = text.replacen("\"vocab_size\": 30", "\"vocab_size\": 31", 1);
        std::fs::write(&path, edited).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::ShapeMismatch(_))));
    }
}
