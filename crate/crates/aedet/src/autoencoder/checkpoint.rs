//! Checkpoints: a binary weights file plus a JSON sidecar describing the
//! model and its training history.
//!
//! `weights.bin` holds every parameter tensor and batch-norm running
//! statistic as little-endian `f32`, in the model's stable walk order.
//! `model.json` records the spec needed to rebuild the network, the
//! training log, and an FNV-1a digest of the weights file so a stale or
//! corrupted pairing is rejected at load time.

use std::fs;
use std::path::Path;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::network::{build_model, Autoencoder, ModelState};
use super::train::TrainingLog;
use super::ModelSpec;
use crate::error::{Error, Result};
use crate::hash::fnv1a64;

pub const WEIGHTS_FILE: &str = "weights.bin";
pub const MODEL_FILE: &str = "model.json";

const MAGIC: &[u8; 4] = b"AEWB";
const VERSION: u32 = 1;

/// Sidecar contents: everything about a checkpoint except the weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub spec: ModelSpec,
    pub log: TrainingLog,
    /// FNV-1a digest (hex) of `weights.bin`.
    pub weights_digest: String,
    pub parameter_count: usize,
}

fn push_array(buf: &mut Vec<u8>, array: &ArrayD<f32>) {
    buf.extend_from_slice(&(array.ndim() as u32).to_le_bytes());
    for dim in array.shape() {
        buf.extend_from_slice(&(*dim as u32).to_le_bytes());
    }
    for v in array.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        if end > self.bytes.len() {
            return Err(Error::Artifact("weights file truncated".into()));
        }
        let v = u32::from_le_bytes(self.bytes[self.pos..end].try_into().expect("4 bytes"));
        self.pos = end;
        Ok(v)
    }

    fn array(&mut self) -> Result<ArrayD<f32>> {
        let ndim = self.u32()? as usize;
        if ndim > 8 {
            return Err(Error::Artifact(format!("implausible tensor rank {ndim} in weights file")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(self.u32()? as usize);
        }
        let count: usize = shape.iter().product();
        let end = self.pos + count * 4;
        if end > self.bytes.len() {
            return Err(Error::Artifact("weights file truncated".into()));
        }
        let mut data = Vec::with_capacity(count);
        for chunk in self.bytes[self.pos..end].chunks_exact(4) {
            data.push(f32::from_le_bytes(chunk.try_into().expect("4 bytes")));
        }
        self.pos = end;
        ArrayD::from_shape_vec(shape, data)
            .map_err(|e| Error::Artifact(format!("malformed tensor in weights file: {e}")))
    }
}

fn encode_state(state: &ModelState) -> Vec<u8> {
    let floats: usize = state
        .params
        .iter()
        .chain(&state.buffers)
        .map(|a| a.len() + a.ndim() + 1)
        .sum();
    let mut buf = Vec::with_capacity(16 + floats * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(state.params.len() as u32).to_le_bytes());
    for array in &state.params {
        push_array(&mut buf, array);
    }
    buf.extend_from_slice(&(state.buffers.len() as u32).to_le_bytes());
    for array in &state.buffers {
        push_array(&mut buf, array);
    }
    buf
}

fn decode_state(bytes: &[u8]) -> Result<ModelState> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::Artifact("not a weights file (bad magic)".into()));
    }
    let mut reader = Reader { bytes, pos: 4 };
    let version = reader.u32()?;
    if version != VERSION {
        return Err(Error::Artifact(format!(
            "weights file version {version} is not supported (expected {VERSION})"
        )));
    }
    let param_count = reader.u32()? as usize;
    let mut params = Vec::with_capacity(param_count);
    for _ in 0..param_count {
        params.push(reader.array()?);
    }
    let buffer_count = reader.u32()? as usize;
    let mut buffers = Vec::with_capacity(buffer_count);
    for _ in 0..buffer_count {
        buffers.push(reader.array()?);
    }
    if reader.pos != bytes.len() {
        return Err(Error::Artifact("trailing bytes in weights file".into()));
    }
    Ok(ModelState { params, buffers })
}

/// Digest (hex FNV-1a) of an existing weights file.
pub fn weights_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:016x}", fnv1a64(&bytes)))
}

/// Writes `weights.bin` and `model.json` into `dir` (created if needed).
pub fn save_checkpoint(model: &mut Autoencoder, log: &TrainingLog, dir: &Path) -> Result<CheckpointMeta> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let state = model.capture_state();
    let bytes = encode_state(&state);
    let weights_path = dir.join(WEIGHTS_FILE);
    fs::write(&weights_path, &bytes).map_err(|e| Error::io(&weights_path, e))?;

    let meta = CheckpointMeta {
        spec: model.spec().clone(),
        log: log.clone(),
        weights_digest: format!("{:016x}", fnv1a64(&bytes)),
        parameter_count: model.parameter_count(),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Parse {
        context: "checkpoint sidecar".into(),
        message: e.to_string(),
    })?;
    let model_path = dir.join(MODEL_FILE);
    fs::write(&model_path, json).map_err(|e| Error::io(&model_path, e))?;
    Ok(meta)
}

/// Rebuilds the model recorded in `dir` and restores its weights.
///
/// Fails with [`Error::Contract`] when the weights digest does not match
/// the sidecar or the tensors do not fit the spec's architecture.
pub fn load_checkpoint(dir: &Path) -> Result<(Autoencoder, CheckpointMeta)> {
    let model_path = dir.join(MODEL_FILE);
    let json = fs::read_to_string(&model_path).map_err(|e| Error::io(&model_path, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&json).map_err(|e| Error::Parse {
        context: format!("checkpoint sidecar {}", model_path.display()),
        message: e.to_string(),
    })?;

    let weights_path = dir.join(WEIGHTS_FILE);
    let bytes = fs::read(&weights_path).map_err(|e| Error::io(&weights_path, e))?;
    let digest = format!("{:016x}", fnv1a64(&bytes));
    if digest != meta.weights_digest {
        return Err(Error::Contract(format!(
            "weights digest {digest} does not match sidecar {} in {}",
            meta.weights_digest,
            dir.display()
        )));
    }

    let state = decode_state(&bytes)?;
    let mut model = build_model(&meta.spec)?;
    model.restore_state(&state)?;
    Ok((model, meta))
}
