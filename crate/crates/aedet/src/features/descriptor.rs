//! 128-dimensional patch descriptors for 32x32 blocks.
//!
//! When a pretrained descriptor network is available on disk it is used;
//! otherwise a fixed-seed Gaussian random projection stands in. Both
//! produce unit-length vectors from mean/variance normalized patches, so
//! downstream features behave identically apart from descriptor quality.

use std::path::Path;
use std::sync::OnceLock;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::blocks::BLOCK_SIZE;
use crate::error::{Error, Result};
use crate::nn::same_padding;

/// Length of every patch descriptor.
pub const DESCRIPTOR_LEN: usize = 128;

const PATCH_ELEMS: usize = BLOCK_SIZE * BLOCK_SIZE;
const PROJECTION_SEED: u64 = 0x00de_5c12_b10c_0001;
const BN_EPS: f32 = 1e-5;

const NETWORK_MAGIC: &[u8; 4] = b"HNWB";
const NETWORK_VERSION: u32 = 1;

/// One conv + batch-norm stage of a descriptor network.
#[derive(Debug, Clone)]
pub struct NetworkLayer {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    /// `(out_ch, in_ch, kernel, kernel)`, flattened row-major.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
    pub bn_gamma: Vec<f32>,
    pub bn_beta: Vec<f32>,
    pub bn_mean: Vec<f32>,
    pub bn_var: Vec<f32>,
}

impl NetworkLayer {
    fn validate(&self, index: usize) -> Result<()> {
        let expect = self.out_ch * self.in_ch * self.kernel * self.kernel;
        let per_ch = [&self.bias, &self.bn_gamma, &self.bn_beta, &self.bn_mean, &self.bn_var];
        if self.kernel == 0
            || self.stride == 0
            || self.in_ch == 0
            || self.out_ch == 0
            || self.weights.len() != expect
            || per_ch.iter().any(|v| v.len() != self.out_ch)
        {
            return Err(Error::Artifact(format!("descriptor network layer {index} is malformed")));
        }
        Ok(())
    }
}

#[derive(Debug)]
enum Backend {
    /// Fixed-seed `N(0, 1)` projection matrix, `DESCRIPTOR_LEN x 1024`.
    Projection,
    Network(Vec<NetworkLayer>),
}

/// Turns 32x32 patches into unit-length 128-vectors.
#[derive(Debug)]
pub struct PatchDescriptor {
    backend: Backend,
}

fn projection_matrix() -> &'static Array2<f32> {
    static MATRIX: OnceLock<Array2<f32>> = OnceLock::new();
    MATRIX.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED);
        Array2::from_shape_fn((DESCRIPTOR_LEN, PATCH_ELEMS), |_| {
            StandardNormal.sample(&mut rng)
        })
    })
}

/// Mean/variance normalization; a flat patch maps to all zeros.
fn normalize_patch(patch: &Array2<f32>) -> Array1<f32> {
    let n = patch.len() as f32;
    let mean = patch.sum() / n;
    let var = patch.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
    let std = var.sqrt();
    if std < 1e-6 {
        Array1::zeros(patch.len())
    } else {
        Array1::from_iter(patch.iter().map(|v| (v - mean) / std))
    }
}

/// Unit-normalizes in place; an all-zero vector becomes the first basis
/// vector so every descriptor has length one.
fn unit_or_e0(mut v: Vec<f32>) -> Vec<f32> {
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm < 1e-12 {
        v.fill(0.0);
        v[0] = 1.0;
    } else {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Same-padded conv + batch norm over a `(channels, h, w)` volume.
fn layer_forward(layer: &NetworkLayer, input: &[Array2<f32>]) -> Vec<Array2<f32>> {
    let (h, w) = input[0].dim();
    let k = layer.kernel;
    let (oh, pad_top, _) = same_padding(h, k, layer.stride);
    let (ow, pad_left, _) = same_padding(w, k, layer.stride);
    let mut out = Vec::with_capacity(layer.out_ch);
    for oc in 0..layer.out_ch {
        let mut plane = Array2::zeros((oh, ow));
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = layer.bias[oc];
                for (ic, in_plane) in input.iter().enumerate() {
                    let w_base = ((oc * layer.in_ch + ic) * k) * k;
                    for ky in 0..k {
                        let iy = (oy * layer.stride + ky) as isize - pad_top as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * layer.stride + kx) as isize - pad_left as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += layer.weights[w_base + ky * k + kx]
                                * in_plane[[iy as usize, ix as usize]];
                        }
                    }
                }
                let norm = (acc - layer.bn_mean[oc]) / (layer.bn_var[oc] + BN_EPS).sqrt();
                plane[[oy, ox]] = layer.bn_gamma[oc] * norm + layer.bn_beta[oc];
            }
        }
        out.push(plane);
    }
    out
}

impl PatchDescriptor {
    /// Uses the pretrained network at `weights`, if given and present.
    /// A missing file falls back to the built-in projection descriptor
    /// with a logged warning; a malformed file is an error.
    pub fn from_weights(weights: Option<&Path>) -> Result<Self> {
        match weights {
            None => Ok(PatchDescriptor { backend: Backend::Projection }),
            Some(path) if !path.exists() => {
                log::warn!(
                    "descriptor weights {} not found; falling back to the projection descriptor",
                    path.display()
                );
                Ok(PatchDescriptor { backend: Backend::Projection })
            }
            Some(path) => {
                let layers = read_network_file(path)?;
                Ok(PatchDescriptor { backend: Backend::Network(layers) })
            }
        }
    }

    /// Whether a pretrained network backs this descriptor.
    pub fn is_pretrained(&self) -> bool {
        matches!(self.backend, Backend::Network(_))
    }

    /// Describes one 32x32 patch as a unit-length 128-vector.
    pub fn describe(&self, patch: &Array2<f32>) -> Result<Vec<f32>> {
        if patch.dim() != (BLOCK_SIZE, BLOCK_SIZE) {
            return Err(Error::Shape(format!(
                "descriptor expects {BLOCK_SIZE}x{BLOCK_SIZE} patches, got {}x{}",
                patch.dim().0,
                patch.dim().1
            )));
        }
        let normalized = normalize_patch(patch);
        match &self.backend {
            Backend::Projection => {
                let projected = projection_matrix().dot(&normalized);
                Ok(unit_or_e0(projected.to_vec()))
            }
            Backend::Network(layers) => {
                let plane = Array2::from_shape_vec(
                    (BLOCK_SIZE, BLOCK_SIZE),
                    normalized.to_vec(),
                )
                .expect("patch-sized vector");
                let mut volume = vec![plane];
                for (i, layer) in layers.iter().enumerate() {
                    volume = layer_forward(layer, &volume);
                    // ReLU between stages; the final stage stays linear and
                    // is pooled and normalized below.
                    if i + 1 < layers.len() {
                        for plane in &mut volume {
                            plane.mapv_inplace(|v| v.max(0.0));
                        }
                    }
                }
                let pooled: Vec<f32> = volume
                    .iter()
                    .map(|plane| plane.sum() / plane.len() as f32)
                    .collect();
                Ok(unit_or_e0(pooled))
            }
        }
    }
}

fn push_slice(buf: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes a descriptor network. The last layer must emit
/// [`DESCRIPTOR_LEN`] channels; inference pools each channel globally.
pub fn write_network_file(path: &Path, layers: &[NetworkLayer]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::Domain("descriptor network needs at least one layer".into()));
    }
    for (i, layer) in layers.iter().enumerate() {
        layer.validate(i)?;
    }
    if layers.last().expect("non-empty").out_ch != DESCRIPTOR_LEN {
        return Err(Error::Domain(format!(
            "descriptor network must end with {DESCRIPTOR_LEN} channels"
        )));
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(NETWORK_MAGIC);
    buf.extend_from_slice(&NETWORK_VERSION.to_le_bytes());
    buf.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for layer in layers {
        for dim in [layer.in_ch, layer.out_ch, layer.kernel, layer.stride] {
            buf.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        push_slice(&mut buf, &layer.weights);
        push_slice(&mut buf, &layer.bias);
        push_slice(&mut buf, &layer.bn_gamma);
        push_slice(&mut buf, &layer.bn_beta);
        push_slice(&mut buf, &layer.bn_mean);
        push_slice(&mut buf, &layer.bn_var);
    }
    std::fs::write(path, &buf).map_err(|e| Error::io(path, e))
}

fn read_network_file(path: &Path) -> Result<Vec<NetworkLayer>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |what: &str| Error::Artifact(format!("descriptor weights {}: {what}", path.display()));
    if bytes.len() < 12 || &bytes[..4] != NETWORK_MAGIC {
        return Err(bad("bad magic"));
    }
    let mut pos = 4usize;
    let u32_at = |pos: &mut usize| -> Result<u32> {
        let end = *pos + 4;
        if end > bytes.len() {
            return Err(bad("truncated"));
        }
        let v = u32::from_le_bytes(bytes[*pos..end].try_into().expect("4 bytes"));
        *pos = end;
        Ok(v)
    };
    if u32_at(&mut pos)? != NETWORK_VERSION {
        return Err(bad("unsupported version"));
    }
    let layer_count = u32_at(&mut pos)? as usize;
    if layer_count == 0 || layer_count > 64 {
        return Err(bad("implausible layer count"));
    }
    let floats_at = |pos: &mut usize, count: usize| -> Result<Vec<f32>> {
        let end = *pos + count * 4;
        if end > bytes.len() {
            return Err(bad("truncated"));
        }
        let out = bytes[*pos..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        *pos = end;
        Ok(out)
    };
    let mut layers = Vec::with_capacity(layer_count);
    let mut expect_in = 1usize;
    for i in 0..layer_count {
        let in_ch = u32_at(&mut pos)? as usize;
        let out_ch = u32_at(&mut pos)? as usize;
        let kernel = u32_at(&mut pos)? as usize;
        let stride = u32_at(&mut pos)? as usize;
        if in_ch != expect_in {
            return Err(bad("layer channel chain broken"));
        }
        let layer = NetworkLayer {
            in_ch,
            out_ch,
            kernel,
            stride,
            weights: floats_at(&mut pos, out_ch * in_ch * kernel * kernel)?,
            bias: floats_at(&mut pos, out_ch)?,
            bn_gamma: floats_at(&mut pos, out_ch)?,
            bn_beta: floats_at(&mut pos, out_ch)?,
            bn_mean: floats_at(&mut pos, out_ch)?,
            bn_var: floats_at(&mut pos, out_ch)?,
        };
        layer.validate(i)?;
        expect_in = out_ch;
        layers.push(layer);
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    if layers.last().expect("non-empty").out_ch != DESCRIPTOR_LEN {
        return Err(bad("network does not end with 128 channels"));
    }
    Ok(layers)
}
