//! The assembled autoencoder: conv encoder, core-specific bottleneck,
//! conv decoder, with hand-written backward passes throughout.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::convpair::{DecOp, EncOp};
use super::loss::LossBreakdown;
use super::plan::resolve_plan;
use super::{AeCore, ModelPlan, ModelSpec};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::{
    Activation, ActivationKind, BatchNorm2d, Conv2d, ConvTranspose2d, Dense, Layer, MaxPool2x2,
    Param, Tensor, UpsampleNearest2x, VectorQuantizer,
};

/// What the bottleneck exposes for latent-space inspection.
pub enum Latent {
    /// Conv feature maps `(batch, channels, height, width)`.
    Map(Tensor),
    /// Per-sample code vectors `(batch, dim)`.
    Vectors(Array2<f32>),
    /// Codebook assignments `(batch, height, width)` plus the quantized maps.
    Quantized { indices: Array3<usize>, vectors: Tensor },
}

impl Latent {
    /// Flattens one sample's latent to a plain vector, whatever its form.
    pub fn sample_vector(&self, index: usize) -> Vec<f32> {
        match self {
            Latent::Map(t) | Latent::Quantized { vectors: t, .. } => {
                t.index_axis(ndarray::Axis(0), index).iter().copied().collect()
            }
            Latent::Vectors(m) => m.row(index).to_vec(),
        }
    }

    /// Batch size of the latent.
    pub fn len(&self) -> usize {
        match self {
            Latent::Map(t) | Latent::Quantized { vectors: t, .. } => t.dim().0,
            Latent::Vectors(m) => m.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// ReLU over `(batch, features)` matrices, used inside FC bottlenecks.
struct Relu2 {
    mask: Option<Array2<f32>>,
}

impl Relu2 {
    fn new() -> Self {
        Relu2 { mask: None }
    }

    fn forward(&mut self, x: &Array2<f32>, train: bool) -> Array2<f32> {
        if train {
            self.mask = Some(x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }));
        }
        x.mapv(|v| v.max(0.0))
    }

    fn backward(&mut self, grad: &Array2<f32>) -> Result<Array2<f32>> {
        let mask = self
            .mask
            .take()
            .ok_or_else(|| Error::Contract("relu backward without forward".into()))?;
        Ok(grad * &mask)
    }
}

fn flatten(x: &Tensor) -> Array2<f32> {
    let (n, c, h, w) = x.dim();
    Array2::from_shape_vec((n, c * h * w), x.iter().copied().collect()).expect("row-major tensor")
}

fn unflatten(x: &Array2<f32>, shape: (usize, usize, usize)) -> Tensor {
    let n = x.nrows();
    Tensor::from_shape_vec((n, shape.0, shape.1, shape.2), x.iter().copied().collect())
        .expect("matching element count")
}

/// Per-element KL divergence of `N(mu, exp(logvar))` against `N(0, 1)`,
/// averaged over every latent element. Zero exactly at `mu = logvar = 0`.
fn kl_mean(mu: &[f32], logvar: &[f32]) -> f32 {
    let count = mu.len() as f32;
    mu.iter()
        .zip(logvar)
        .map(|(&m, &lv)| 0.5 * (lv.exp() + m * m - 1.0 - lv))
        .sum::<f32>()
        / count
}

struct VaeConvCache {
    mu: Tensor,
    logvar: Tensor,
    eps: Tensor,
}

struct VaeFcCache {
    mu: Array2<f32>,
    logvar: Array2<f32>,
    eps: Array2<f32>,
}

enum Bottleneck {
    Identity,
    Fc {
        enc_shape: (usize, usize, usize),
        fc1: Dense,
        relu1: Relu2,
        fc2: Dense,
        relu2: Relu2,
    },
    VaeConv {
        mu_head: Conv2d,
        logvar_head: Conv2d,
        back: Conv2d,
        back_act: Activation,
        kl_weight: f32,
        cache: Option<VaeConvCache>,
        last_kl: f32,
    },
    VaeFc {
        enc_shape: (usize, usize, usize),
        fc_in: Dense,
        relu_in: Relu2,
        mu_head: Dense,
        logvar_head: Dense,
        fc_back1: Dense,
        relu_back1: Relu2,
        fc_back2: Dense,
        relu_back2: Relu2,
        kl_weight: f32,
        cache: Option<VaeFcCache>,
        last_kl: f32,
    },
    Vq {
        proj_in: Conv2d,
        vq: VectorQuantizer,
        proj_out: Conv2d,
        out_act: Activation,
    },
}

impl Bottleneck {
    fn build(spec: &ModelSpec, encoded: (usize, usize, usize), rng: &mut ChaCha8Rng) -> Self {
        let c = encoded.0;
        let flat = encoded.0 * encoded.1 * encoded.2;
        let latent = &spec.latent;
        match spec.core {
            AeCore::Bae1 => Bottleneck::Identity,
            AeCore::Bae2 => Bottleneck::Fc {
                enc_shape: encoded,
                fc1: Dense::new(flat, latent.fc_width, rng),
                relu1: Relu2::new(),
                fc2: Dense::new(latent.fc_width, flat, rng),
                relu2: Relu2::new(),
            },
            AeCore::Vae1 => Bottleneck::VaeConv {
                mu_head: Conv2d::new(c, latent.latent_channels, 1, 1, rng),
                logvar_head: Conv2d::new(c, latent.latent_channels, 1, 1, rng),
                back: Conv2d::new(latent.latent_channels, c, 1, 1, rng),
                back_act: Activation::new(ActivationKind::Relu),
                kl_weight: latent.kl_weight,
                cache: None,
                last_kl: 0.0,
            },
            AeCore::Vae2 => Bottleneck::VaeFc {
                enc_shape: encoded,
                fc_in: Dense::new(flat, latent.fc_width, rng),
                relu_in: Relu2::new(),
                mu_head: Dense::new(latent.fc_width, latent.latent_channels, rng),
                logvar_head: Dense::new(latent.fc_width, latent.latent_channels, rng),
                fc_back1: Dense::new(latent.latent_channels, latent.fc_width, rng),
                relu_back1: Relu2::new(),
                fc_back2: Dense::new(latent.fc_width, flat, rng),
                relu_back2: Relu2::new(),
                kl_weight: latent.kl_weight,
                cache: None,
                last_kl: 0.0,
            },
            AeCore::Vqvae1 => Bottleneck::Vq {
                proj_in: Conv2d::new(c, latent.embedding_dim, 1, 1, rng),
                vq: VectorQuantizer::new(
                    latent.codebook_size,
                    latent.embedding_dim,
                    latent.commitment_beta,
                    rng,
                ),
                proj_out: Conv2d::new(latent.embedding_dim, c, 1, 1, rng),
                out_act: Activation::new(ActivationKind::Relu),
            },
        }
    }

    fn forward(&mut self, x: &Tensor, train: bool, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        match self {
            Bottleneck::Identity => Ok(x.clone()),
            Bottleneck::Fc { enc_shape, fc1, relu1, fc2, relu2 } => {
                let flat = flatten(x);
                let code = relu1.forward(&fc1.forward(&flat, train)?, train);
                let back = relu2.forward(&fc2.forward(&code, train)?, train);
                Ok(unflatten(&back, *enc_shape))
            }
            Bottleneck::VaeConv { mu_head, logvar_head, back, back_act, cache, last_kl, .. } => {
                let mu = mu_head.forward(x, train)?;
                let z = if train {
                    let logvar = logvar_head.forward(x, train)?;
                    let eps =
                        Tensor::from_shape_fn(mu.raw_dim(), |_| rng.sample::<f32, _>(StandardNormal));
                    let z = &mu + &(&eps * &logvar.mapv(|v| (0.5 * v).exp()));
                    *last_kl = kl_mean(
                        mu.as_slice().expect("standard layout"),
                        logvar.as_slice().expect("standard layout"),
                    );
                    *cache = Some(VaeConvCache { mu, logvar, eps });
                    z
                } else {
                    mu
                };
                back_act.forward(&back.forward(&z, train)?, train)
            }
            Bottleneck::VaeFc {
                enc_shape,
                fc_in,
                relu_in,
                mu_head,
                logvar_head,
                fc_back1,
                relu_back1,
                fc_back2,
                relu_back2,
                cache,
                last_kl,
                ..
            } => {
                let flat = flatten(x);
                let hidden = relu_in.forward(&fc_in.forward(&flat, train)?, train);
                let mu = mu_head.forward(&hidden, train)?;
                let z = if train {
                    let logvar = logvar_head.forward(&hidden, train)?;
                    let eps =
                        Array2::from_shape_fn(mu.raw_dim(), |_| rng.sample::<f32, _>(StandardNormal));
                    let z = &mu + &(&eps * &logvar.mapv(|v| (0.5 * v).exp()));
                    *last_kl = kl_mean(
                        mu.as_slice().expect("standard layout"),
                        logvar.as_slice().expect("standard layout"),
                    );
                    *cache = Some(VaeFcCache { mu, logvar, eps });
                    z
                } else {
                    mu
                };
                let h1 = relu_back1.forward(&fc_back1.forward(&z, train)?, train);
                let h2 = relu_back2.forward(&fc_back2.forward(&h1, train)?, train);
                Ok(unflatten(&h2, *enc_shape))
            }
            Bottleneck::Vq { proj_in, vq, proj_out, out_act } => {
                let ze = proj_in.forward(x, train)?;
                let zq = vq.forward(&ze, train)?;
                out_act.forward(&proj_out.forward(&zq, train)?, train)
            }
        }
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        match self {
            Bottleneck::Identity => Ok(grad.clone()),
            Bottleneck::Fc { enc_shape, fc1, relu1, fc2, relu2 } => {
                let g = flatten(grad);
                let g = fc2.backward(&relu2.backward(&g)?)?;
                let g = fc1.backward(&relu1.backward(&g)?)?;
                Ok(unflatten(&g, *enc_shape))
            }
            Bottleneck::VaeConv { mu_head, logvar_head, back, back_act, kl_weight, cache, .. } => {
                let cache = cache
                    .take()
                    .ok_or_else(|| Error::Contract("vae backward without forward".into()))?;
                let dz = back.backward(&back_act.backward(grad)?)?;
                let count = cache.mu.len() as f32;
                let klw = *kl_weight / count;
                let dmu = &dz + &cache.mu.mapv(|m| m * klw);
                let dlv = &(&dz * &cache.eps) * &cache.logvar.mapv(|v| 0.5 * (0.5 * v).exp())
                    + cache.logvar.mapv(|v| 0.5 * (v.exp() - 1.0) * klw);
                let dx = mu_head.backward(&dmu)? + logvar_head.backward(&dlv)?;
                Ok(dx)
            }
            Bottleneck::VaeFc {
                enc_shape,
                fc_in,
                relu_in,
                mu_head,
                logvar_head,
                fc_back1,
                relu_back1,
                fc_back2,
                relu_back2,
                kl_weight,
                cache,
                ..
            } => {
                let cache = cache
                    .take()
                    .ok_or_else(|| Error::Contract("vae backward without forward".into()))?;
                let g = flatten(grad);
                let g = fc_back2.backward(&relu_back2.backward(&g)?)?;
                let dz = fc_back1.backward(&relu_back1.backward(&g)?)?;
                let count = cache.mu.len() as f32;
                let klw = *kl_weight / count;
                let dmu = &dz + &cache.mu.mapv(|m| m * klw);
                let dlv = &(&dz * &cache.eps) * &cache.logvar.mapv(|v| 0.5 * (0.5 * v).exp())
                    + cache.logvar.mapv(|v| 0.5 * (v.exp() - 1.0) * klw);
                let dh = mu_head.backward(&dmu)? + logvar_head.backward(&dlv)?;
                let g = fc_in.backward(&relu_in.backward(&dh)?)?;
                Ok(unflatten(&g, *enc_shape))
            }
            Bottleneck::Vq { proj_in, vq, proj_out, out_act } => {
                let g = proj_out.backward(&out_act.backward(grad)?)?;
                let g = vq.backward(&g)?;
                proj_in.backward(&g)
            }
        }
    }

    fn params(&mut self) -> Vec<&mut Param> {
        match self {
            Bottleneck::Identity => Vec::new(),
            Bottleneck::Fc { fc1, fc2, .. } => {
                let mut p = fc1.params();
                p.extend(fc2.params());
                p
            }
            Bottleneck::VaeConv { mu_head, logvar_head, back, .. } => {
                let mut p = mu_head.params();
                p.extend(logvar_head.params());
                p.extend(back.params());
                p
            }
            Bottleneck::VaeFc { fc_in, mu_head, logvar_head, fc_back1, fc_back2, .. } => {
                let mut p = fc_in.params();
                p.extend(mu_head.params());
                p.extend(logvar_head.params());
                p.extend(fc_back1.params());
                p.extend(fc_back2.params());
                p
            }
            Bottleneck::Vq { proj_in, vq, proj_out, .. } => {
                let mut p = proj_in.params();
                p.extend(vq.params());
                p.extend(proj_out.params());
                p
            }
        }
    }

    fn last_kl(&self) -> f32 {
        match self {
            Bottleneck::VaeConv { last_kl, .. } | Bottleneck::VaeFc { last_kl, .. } => *last_kl,
            _ => 0.0,
        }
    }

    fn vq_losses(&self) -> (f32, f32) {
        match self {
            Bottleneck::Vq { vq, .. } => (vq.last_codebook_loss, vq.last_commitment_loss),
            _ => (0.0, 0.0),
        }
    }
}

/// A full snapshot of a model's weights and batch-norm running statistics.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub params: Vec<ndarray::ArrayD<f32>>,
    pub buffers: Vec<ndarray::ArrayD<f32>>,
}

/// A built autoencoder ready for training or inference.
pub struct Autoencoder {
    spec: ModelSpec,
    plan: ModelPlan,
    encoder: Vec<Box<dyn Layer>>,
    bottleneck: Bottleneck,
    decoder: Vec<Box<dyn Layer>>,
    sample_rng: ChaCha8Rng,
}

impl std::fmt::Debug for Autoencoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Autoencoder")
            .field("model_id", &self.spec.model_id())
            .field("input", &self.spec.input)
            .finish_non_exhaustive()
    }
}

/// Builds the network described by `spec` with seeded Glorot-uniform
/// initialization. The same spec always yields identical weights.
pub fn build_model(spec: &ModelSpec) -> Result<Autoencoder> {
    let plan = resolve_plan(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let act_kind = if plan.leaky { ActivationKind::LeakyRelu } else { ActivationKind::Relu };

    let mut encoder: Vec<Box<dyn Layer>> = Vec::new();
    let mut c = spec.input.0;
    for op in plan.enc_ops.clone() {
        match op {
            EncOp::Conv { filters, kernel, stride } => {
                encoder.push(Box::new(Conv2d::new(c, filters, kernel, stride, &mut rng)));
                encoder.push(Box::new(BatchNorm2d::new(filters)));
                encoder.push(Box::new(Activation::new(act_kind)));
                c = filters;
            }
            EncOp::Pool => encoder.push(Box::new(MaxPool2x2::new())),
        }
    }

    let bottleneck = Bottleneck::build(spec, plan.encoded, &mut rng);

    let mut decoder: Vec<Box<dyn Layer>> = Vec::new();
    let mut c = plan.encoded.0;
    for op in plan.dec_ops.clone() {
        match op {
            DecOp::Conv { filters, kernel } => {
                decoder.push(Box::new(Conv2d::new(c, filters, kernel, 1, &mut rng)));
                decoder.push(Box::new(BatchNorm2d::new(filters)));
                decoder.push(Box::new(Activation::new(act_kind)));
                c = filters;
            }
            DecOp::ConvT { filters, kernel } => {
                decoder.push(Box::new(ConvTranspose2d::new(c, filters, kernel, &mut rng)));
                decoder.push(Box::new(BatchNorm2d::new(filters)));
                decoder.push(Box::new(Activation::new(act_kind)));
                c = filters;
            }
            DecOp::Up => decoder.push(Box::new(UpsampleNearest2x::new())),
            DecOp::OutConv { kernel } => {
                decoder.push(Box::new(Conv2d::new(c, spec.input.0, kernel, 1, &mut rng)));
                decoder.push(Box::new(Activation::new(ActivationKind::Sigmoid)));
                c = spec.input.0;
            }
            DecOp::ConvTOut { kernel } => {
                decoder.push(Box::new(ConvTranspose2d::new(c, spec.input.0, kernel, &mut rng)));
                decoder.push(Box::new(Activation::new(ActivationKind::Sigmoid)));
                c = spec.input.0;
            }
        }
    }

    let sample_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_e9f5_u64);
    Ok(Autoencoder { spec: spec.clone(), plan, encoder, bottleneck, decoder, sample_rng })
}

impl Autoencoder {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn plan(&self) -> &ModelPlan {
        &self.plan
    }

    /// Resets the stream used to sample variational noise, so a training
    /// run can be reproduced exactly.
    pub fn set_sample_seed(&mut self, seed: u64) {
        self.sample_rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (_, c, h, w) = x.dim();
        if (c, h, w) != self.spec.input {
            return Err(Error::Shape(format!(
                "model {} expects ({}, {}, {}), got ({c}, {h}, {w})",
                self.spec.model_id(),
                self.spec.input.0,
                self.spec.input.1,
                self.spec.input.2
            )));
        }
        Ok(())
    }

    fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &mut self.encoder {
            h = layer.forward(&h, train)?;
        }
        h = self.bottleneck.forward(&h, train, &mut self.sample_rng)?;
        for layer in &mut self.decoder {
            h = layer.forward(&h, train)?;
        }
        Ok(h)
    }

    /// Training-mode forward pass; caches everything [`Self::backward`] needs.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        self.forward(x, true)
    }

    /// Inference: batch norm running statistics, variational mean instead
    /// of a sample, output clamped to `[0, 1]`.
    pub fn reconstruct(&mut self, x: &Tensor) -> Result<Tensor> {
        let mut out = self.forward(x, false)?;
        out.mapv_inplace(|v| v.clamp(0.0, 1.0));
        Ok(out)
    }

    /// Reconstructs a batch of images and pairs each with its absolute
    /// difference image.
    pub fn reconstruct_images(&mut self, images: &[Image]) -> Result<Vec<ReconstructionTriplet>> {
        let x = images_to_tensor(images)?;
        let out = self.reconstruct(&x)?;
        let reconstructions = tensor_to_images(&out)?;
        images
            .iter()
            .zip(reconstructions)
            .map(|(original, reconstruction)| {
                let difference = original.absdiff(&reconstruction)?;
                Ok(ReconstructionTriplet {
                    original: original.clone(),
                    reconstruction,
                    difference,
                })
            })
            .collect()
    }

    /// Single-image convenience for [`Self::reconstruct_images`].
    pub fn reconstruct_image(&mut self, image: &Image) -> Result<ReconstructionTriplet> {
        let mut triplets = self.reconstruct_images(std::slice::from_ref(image))?;
        Ok(triplets.remove(0))
    }

    /// Runs the encoder in inference mode and exposes the latent code.
    pub fn encode_latent(&mut self, x: &Tensor) -> Result<Latent> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &mut self.encoder {
            h = layer.forward(&h, false)?;
        }
        match &mut self.bottleneck {
            Bottleneck::Identity => Ok(Latent::Map(h)),
            Bottleneck::Fc { fc1, .. } => {
                let code = fc1.forward(&flatten(&h), false)?.mapv(|v| v.max(0.0));
                Ok(Latent::Vectors(code))
            }
            Bottleneck::VaeConv { mu_head, .. } => Ok(Latent::Map(mu_head.forward(&h, false)?)),
            Bottleneck::VaeFc { fc_in, relu_in, mu_head, .. } => {
                let hidden = relu_in.forward(&fc_in.forward(&flatten(&h), false)?, false);
                Ok(Latent::Vectors(mu_head.forward(&hidden, false)?))
            }
            Bottleneck::Vq { proj_in, vq, .. } => {
                let ze = proj_in.forward(&h, false)?;
                let (vectors, indices) = vq.quantize(&ze)?;
                Ok(Latent::Quantized { indices, vectors })
            }
        }
    }

    /// Backpropagates the reconstruction gradient; the bottleneck adds its
    /// own regularizer gradients (KL, codebook, commitment) on the way.
    pub fn backward(&mut self, grad: &Tensor) -> Result<()> {
        let mut g = grad.clone();
        for layer in self.decoder.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        g = self.bottleneck.backward(&g)?;
        for layer in self.encoder.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(())
    }

    /// All trainable parameters in a stable order.
    pub fn params(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for layer in &mut self.encoder {
            out.extend(layer.params());
        }
        out.extend(self.bottleneck.params());
        for layer in &mut self.decoder {
            out.extend(layer.params());
        }
        out
    }

    pub fn parameter_count(&mut self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Snapshots every weight and batch-norm running statistic.
    pub fn capture_state(&mut self) -> ModelState {
        let params = self.params().iter().map(|p| p.value.clone()).collect();
        let mut buffers = Vec::new();
        for layer in self.encoder.iter().chain(self.decoder.iter()) {
            buffers.extend(layer.state());
        }
        ModelState { params, buffers }
    }

    /// Restores a snapshot taken from a model of the same spec.
    pub fn restore_state(&mut self, state: &ModelState) -> Result<()> {
        {
            let mut params = self.params();
            if params.len() != state.params.len() {
                return Err(Error::Contract(format!(
                    "state holds {} parameter tensors, model has {}",
                    state.params.len(),
                    params.len()
                )));
            }
            for (param, value) in params.iter_mut().zip(&state.params) {
                if param.value.shape() != value.shape() {
                    return Err(Error::Contract(format!(
                        "parameter shape mismatch: model {:?}, state {:?}",
                        param.value.shape(),
                        value.shape()
                    )));
                }
                param.value.assign(value);
            }
        }
        let mut offset = 0;
        for layer in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            let take = layer.state().len();
            let end = offset + take;
            if end > state.buffers.len() {
                return Err(Error::Contract("state holds too few buffer arrays".into()));
            }
            layer.set_state(&state.buffers[offset..end])?;
            offset = end;
        }
        if offset != state.buffers.len() {
            return Err(Error::Contract(format!(
                "state holds {} buffer arrays, model consumes {offset}",
                state.buffers.len()
            )));
        }
        Ok(())
    }

    /// Loss terms of the most recent training-mode forward pass.
    pub fn loss_breakdown(&self, reconstruction: f32) -> LossBreakdown {
        let kl = self.bottleneck.last_kl() * self.spec.latent.kl_weight;
        let (codebook, commitment) = self.bottleneck.vq_losses();
        LossBreakdown {
            total: reconstruction + kl + codebook + commitment,
            reconstruction,
            kl,
            codebook,
            commitment,
        }
    }
}

/// An original image together with its reconstruction and their pixelwise
/// absolute difference. All three share one shape and live in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ReconstructionTriplet {
    pub original: Image,
    pub reconstruction: Image,
    pub difference: Image,
}

/// Converts a batch of images to an `(n, c, h, w)` tensor.
pub fn images_to_tensor(images: &[Image]) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::Shape("empty image batch".into()))?;
    let (h, w, c) = (first.height(), first.width(), first.channels());
    let mut out = Tensor::zeros((images.len(), c, h, w));
    for (i, img) in images.iter().enumerate() {
        if img.height() != h || img.width() != w || img.channels() != c {
            return Err(Error::Shape(format!(
                "batch mixes image shapes: {}x{}x{} vs {h}x{w}x{c}",
                img.height(),
                img.width(),
                img.channels()
            )));
        }
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    out[[i, ch, y, x]] = img.data()[[y, x, ch]];
                }
            }
        }
    }
    Ok(out)
}

/// Converts an `(n, c, h, w)` tensor back to images, clamping to `[0, 1]`.
pub fn tensor_to_images(t: &Tensor) -> Result<Vec<Image>> {
    let (n, c, h, w) = t.dim();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut data = Array3::zeros((h, w, c));
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    data[[y, x, ch]] = t[[i, ch, y, x]].clamp(0.0, 1.0);
                }
            }
        }
        out.push(Image::new(data)?);
    }
    Ok(out)
}
