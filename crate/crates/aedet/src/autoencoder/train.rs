//! Denoising training loop: augmented clean targets, salt-and-pepper
//! corrupted inputs, Adam updates, early stopping on validation loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{mse_loss, LossBreakdown};
use super::network::{images_to_tensor, Autoencoder};
use crate::dataset::{add_salt_pepper, augment, AugmentPolicy};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::Adam;

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    /// Epochs without validation improvement before stopping early.
    pub patience: usize,
    /// Fraction of pixels corrupted with salt-and-pepper noise on the
    /// model input; the target stays clean.
    pub noise_fraction: f64,
    pub augment: AugmentPolicy,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 8,
            learning_rate: 1e-3,
            patience: 10,
            noise_fraction: 0.05,
            augment: AugmentPolicy::default(),
            seed: 0,
        }
    }
}

/// Loss trajectory of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean optimized loss over training batches.
    pub train_total: f32,
    /// Mean reconstruction term over training batches.
    pub train_reconstruction: f32,
    /// Clean-input reconstruction error on the validation set, if any.
    pub val_reconstruction: Option<f32>,
}

/// What happened over a whole training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose weights the model ended up with.
    pub best_epoch: usize,
    pub best_val: Option<f32>,
    pub stopped_early: bool,
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 over the combined words; decorrelates derived streams.
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(b.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mean clean-input reconstruction error, in inference mode.
fn validation_loss(model: &mut Autoencoder, images: &[Image], batch_size: usize) -> Result<f32> {
    let mut total = 0.0f64;
    let mut count = 0usize;
    for chunk in images.chunks(batch_size) {
        let x = images_to_tensor(chunk)?;
        let recon = model.reconstruct(&x)?;
        let (loss, _) = mse_loss(&recon, &x)?;
        total += loss as f64 * chunk.len() as f64;
        count += chunk.len();
    }
    Ok((total / count as f64) as f32)
}

/// Trains `model` on OK samples only. Inputs are augmented then corrupted
/// with salt-and-pepper noise; targets are the uncorrupted augmentations.
/// Keeps the weights of the best validation epoch (the final epoch when
/// `val_images` is empty). Fully reproducible for a given config.
pub fn train(
    model: &mut Autoencoder,
    train_images: &[Image],
    val_images: &[Image],
    cfg: &TrainConfig,
) -> Result<TrainingLog> {
    if train_images.is_empty() {
        return Err(Error::Domain("training set is empty".into()));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("epochs and batch_size must be positive".into()));
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0) {
        return Err(Error::Config(format!("learning rate must be positive, got {}", cfg.learning_rate)));
    }

    model.set_sample_seed(mix(cfg.seed, 0x5a17, 0));
    let mut adam = Adam::new(cfg.learning_rate);
    let mut log = TrainingLog { epochs: Vec::new(), best_epoch: 0, best_val: None, stopped_early: false };
    let mut best_state = None;
    let mut since_best = 0usize;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_images.len()).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, epoch as u64, 0x0bed));
        order.shuffle(&mut shuffle_rng);

        let mut total_sum = 0.0f64;
        let mut recon_sum = 0.0f64;
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut targets = Vec::with_capacity(batch.len());
            let mut inputs = Vec::with_capacity(batch.len());
            for &idx in batch {
                let sample_seed = mix(cfg.seed, epoch as u64, idx as u64);
                let clean = augment(&train_images[idx], &cfg.augment, sample_seed);
                let noisy = add_salt_pepper(&clean, cfg.noise_fraction, mix(sample_seed, 0x7019, 1))?;
                targets.push(clean);
                inputs.push(noisy);
            }
            let target = images_to_tensor(&targets)?;
            let input = images_to_tensor(&inputs)?;

            let output = model.forward_train(&input)?;
            let (recon, grad) = mse_loss(&output, &target)?;
            let breakdown: LossBreakdown = model.loss_breakdown(recon);
            if !breakdown.total.is_finite() {
                return Err(Error::Training(format!(
                    "loss became non-finite at epoch {epoch}: {breakdown:?}"
                )));
            }
            model.backward(&grad)?;
            adam.step(&mut model.params());
            total_sum += breakdown.total as f64;
            recon_sum += breakdown.reconstruction as f64;
            batches += 1;
        }

        // A finite loss alone does not prove the weights are healthy: NaNs
        // inside the network can be masked by max-based ops (ReLU, pooling)
        // before they reach the output, so sweep the parameters directly.
        if model.params().iter().any(|p| p.value.iter().any(|v| !v.is_finite())) {
            return Err(Error::Training(format!(
                "parameters became non-finite at epoch {epoch}"
            )));
        }

        let train_total = (total_sum / batches as f64) as f32;
        let train_reconstruction = (recon_sum / batches as f64) as f32;
        let val_reconstruction = if val_images.is_empty() {
            None
        } else {
            Some(validation_loss(model, val_images, cfg.batch_size)?)
        };
        log.epochs.push(EpochStats { epoch, train_total, train_reconstruction, val_reconstruction });
        match val_reconstruction {
            Some(v) => log::info!(
                "epoch {:>3}/{}: train {:.6} (recon {:.6}), val {:.6}",
                epoch + 1,
                cfg.epochs,
                train_total,
                train_reconstruction,
                v
            ),
            None => log::info!(
                "epoch {:>3}/{}: train {:.6} (recon {:.6})",
                epoch + 1,
                cfg.epochs,
                train_total,
                train_reconstruction
            ),
        }

        if let Some(val) = val_reconstruction {
            if !val.is_finite() {
                return Err(Error::Training(format!("validation loss became non-finite at epoch {epoch}")));
            }
            let improved = log.best_val.map_or(true, |best| val < best);
            if improved {
                log.best_val = Some(val);
                log.best_epoch = epoch;
                best_state = Some(model.capture_state());
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    log.stopped_early = true;
                    break;
                }
            }
        } else {
            log.best_epoch = epoch;
        }
    }

    if let Some(state) = best_state {
        model.restore_state(&state)?;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::super::{build_model, AeCore, ConvPair, LatentConfig, ModelSpec};
    use super::*;
    use ndarray::Array2;

    fn tiny_spec() -> ModelSpec {
        ModelSpec {
            core: AeCore::Bae1,
            conv_pair: ConvPair::ConvM3,
            input: (1, 8, 8),
            latent: LatentConfig::default(),
            seed: 3,
        }
    }

    fn flat_images(n: usize, level: f32) -> Vec<Image> {
        (0..n)
            .map(|i| {
                Image::from_gray(Array2::from_shape_fn((8, 8), |(y, x)| {
                    (level + 0.01 * ((x + y + i) % 3) as f32).clamp(0.0, 1.0)
                }))
                .unwrap()
            })
            .collect()
    }

    fn quiet_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 4,
            learning_rate: 5e-3,
            patience: 50,
            noise_fraction: 0.02,
            // Geometry-only augmentation keeps the toy task stationary.
            augment: AugmentPolicy {
                brightness: 0.0,
                contrast: 0.0,
                saturation: 0.0,
                hue: 0.0,
                invert: 0.0,
                ..AugmentPolicy::default()
            },
            seed: 9,
        }
    }

    #[test]
    fn loss_decreases_on_a_toy_problem() {
        let mut model = build_model(&tiny_spec()).unwrap();
        let images = flat_images(8, 0.3);
        let log = train(&mut model, &images, &[], &quiet_config(12)).unwrap();
        assert_eq!(log.epochs.len(), 12);
        let first = log.epochs.first().unwrap().train_reconstruction;
        let last = log.epochs.last().unwrap().train_reconstruction;
        assert!(last < first, "expected improvement, got {first} -> {last}");
    }

    #[test]
    fn training_is_reproducible() {
        let images = flat_images(6, 0.4);
        let val = flat_images(3, 0.4);
        let cfg = quiet_config(3);
        let mut a = build_model(&tiny_spec()).unwrap();
        let mut b = build_model(&tiny_spec()).unwrap();
        let log_a = train(&mut a, &images, &val, &cfg).unwrap();
        let log_b = train(&mut b, &images, &val, &cfg).unwrap();
        assert_eq!(log_a, log_b);
        let (pa, pb) = (a.capture_state(), b.capture_state());
        assert_eq!(pa.params, pb.params);
        assert_eq!(pa.buffers, pb.buffers);
    }

    #[test]
    fn model_keeps_the_best_validation_epoch() {
        let mut model = build_model(&tiny_spec()).unwrap();
        let images = flat_images(8, 0.35);
        let val = flat_images(4, 0.35);
        let cfg = quiet_config(6);
        let log = train(&mut model, &images, &val, &cfg).unwrap();
        let best = log.best_val.unwrap();
        let now = validation_loss(&mut model, &val, cfg.batch_size).unwrap();
        assert!((now - best).abs() <= 1e-6, "restored val {now} vs best {best}");
        let min = log
            .epochs
            .iter()
            .filter_map(|e| e.val_reconstruction)
            .fold(f32::INFINITY, f32::min);
        assert_eq!(best, min);
    }

    #[test]
    fn patience_stops_training_early() {
        let mut model = build_model(&tiny_spec()).unwrap();
        let images = flat_images(8, 0.35);
        let val = flat_images(4, 0.35);
        let mut cfg = quiet_config(200);
        cfg.patience = 2;
        let log = train(&mut model, &images, &val, &cfg).unwrap();
        if log.stopped_early {
            assert!(log.epochs.len() < 200);
            let tail = &log.epochs[log.best_epoch + 1..];
            assert_eq!(tail.len(), 2, "exactly `patience` epochs without improvement");
        } else {
            panic!("200 epochs on a toy problem should plateau");
        }
    }

    #[test]
    fn non_finite_weights_are_a_training_error() {
        let mut model = build_model(&tiny_spec()).unwrap();
        for p in model.params() {
            p.value.fill(f32::NAN);
            break;
        }
        let images = flat_images(4, 0.3);
        let err = train(&mut model, &images, &[], &quiet_config(1)).unwrap_err();
        assert!(matches!(err, Error::Training(_)), "{err}");
    }

    #[test]
    fn empty_training_set_is_a_domain_error() {
        let mut model = build_model(&tiny_spec()).unwrap();
        let err = train(&mut model, &[], &[], &quiet_config(1)).unwrap_err();
        assert!(matches!(err, Error::Domain(_)), "{err}");
    }

    #[test]
    fn zero_epochs_is_a_config_error() {
        let mut model = build_model(&tiny_spec()).unwrap();
        let images = flat_images(2, 0.3);
        let err = train(&mut model, &images, &[], &quiet_config(0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }
}
