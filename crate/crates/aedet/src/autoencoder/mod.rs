//! Autoencoder models: five cores crossed with six conv encoder/decoder
//! pairs, trained to denoise OK samples.

mod checkpoint;
mod convpair;
mod loss;
mod network;
mod plan;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, weights_digest, CheckpointMeta};
pub use convpair::{decoder_ops, downsample_factor, encoder_ops, DecOp, EncOp};
pub use loss::{mse_loss, LossBreakdown};
pub use network::{
    build_model, images_to_tensor, tensor_to_images, Autoencoder, Latent, ModelState,
    ReconstructionTriplet,
};
pub use plan::{resolve_plan, ModelPlan, PlanEntry, PlanNote, PlanStage};
pub use train::{train, EpochStats, TrainConfig, TrainingLog};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! fmt_via_name {
    () => {
        fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
            f.write_str(self.name())
        }
    };
}

/// The autoencoder core: what sits between the conv encoder and decoder
/// and which loss terms apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AeCore {
    /// Plain convolutional bottleneck.
    Bae1,
    /// Fully-connected bottleneck.
    Bae2,
    /// Convolutional variational bottleneck (mean/log-variance heads).
    Vae1,
    /// Fully-connected variational bottleneck.
    Vae2,
    /// Vector-quantized bottleneck with a learned codebook.
    Vqvae1,
}

impl AeCore {
    pub const ALL: [AeCore; 5] = [AeCore::Bae1, AeCore::Bae2, AeCore::Vae1, AeCore::Vae2, AeCore::Vqvae1];

    pub fn name(self) -> &'static str {
        match self {
            AeCore::Bae1 => "BAE1",
            AeCore::Bae2 => "BAE2",
            AeCore::Vae1 => "VAE1",
            AeCore::Vae2 => "VAE2",
            AeCore::Vqvae1 => "VQVAE1",
        }
    }
}

impl std::fmt::Display for AeCore {
    fmt_via_name!();
}

impl std::str::FromStr for AeCore {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        AeCore::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown core {s:?}; valid cores: {}",
                    AeCore::ALL.map(|c| c.name()).join(", ")
                ))
            })
    }
}

/// One of the six published conv encoder/decoder pairs. `ConvM6` combines
/// the `ConvM5` encoder with the `ConvM4` decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConvPair {
    ConvM1,
    ConvM2,
    ConvM3,
    ConvM4,
    ConvM5,
    ConvM6,
}

impl ConvPair {
    pub const ALL: [ConvPair; 6] = [
        ConvPair::ConvM1,
        ConvPair::ConvM2,
        ConvPair::ConvM3,
        ConvPair::ConvM4,
        ConvPair::ConvM5,
        ConvPair::ConvM6,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConvPair::ConvM1 => "ConvM1",
            ConvPair::ConvM2 => "ConvM2",
            ConvPair::ConvM3 => "ConvM3",
            ConvPair::ConvM4 => "ConvM4",
            ConvPair::ConvM5 => "ConvM5",
            ConvPair::ConvM6 => "ConvM6",
        }
    }
}

impl std::fmt::Display for ConvPair {
    fmt_via_name!();
}

impl std::str::FromStr for ConvPair {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ConvPair::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown conv pair {s:?}; valid pairs: {}",
                    ConvPair::ALL.map(|c| c.name()).join(", ")
                ))
            })
    }
}

/// Core-specific bottleneck sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatentConfig {
    /// Width of the fully-connected bottleneck (BAE2, VAE2).
    pub fc_width: usize,
    /// Latent channels of VAE1's conv heads and latent dimension of VAE2.
    pub latent_channels: usize,
    /// Codebook entries (VQVAE1).
    pub codebook_size: usize,
    /// Codebook embedding dimension (VQVAE1).
    pub embedding_dim: usize,
    /// Commitment loss weight (VQVAE1).
    pub commitment_beta: f32,
    /// Weight of the per-dimension KL term (VAE cores).
    pub kl_weight: f32,
}

impl Default for LatentConfig {
    fn default() -> Self {
        LatentConfig {
            fc_width: 256,
            latent_channels: 16,
            codebook_size: 512,
            embedding_dim: 64,
            commitment_beta: 0.25,
            kl_weight: 1.0,
        }
    }
}

/// Declarative model description; everything needed to rebuild a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub core: AeCore,
    pub conv_pair: ConvPair,
    /// Input `(channels, height, width)`.
    pub input: (usize, usize, usize),
    #[serde(default)]
    pub latent: LatentConfig,
    /// Seed for parameter initialization and training-time sampling.
    pub seed: u64,
}

impl ModelSpec {
    /// Model identifier used for checkpoint sharing, e.g. `ConvM2-VQVAE1`.
    pub fn model_id(&self) -> String {
        format!("{}-{}", self.conv_pair, self.core)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_and_pair_parse_case_insensitively() {
        assert_eq!("vqvae1".parse::<AeCore>().unwrap(), AeCore::Vqvae1);
        assert_eq!("ConvM3".parse::<ConvPair>().unwrap(), ConvPair::ConvM3);
        assert_eq!("CONVM6".parse::<ConvPair>().unwrap(), ConvPair::ConvM6);
    }

    #[test]
    fn unknown_names_are_config_errors_listing_options() {
        let err = "BAE9".parse::<AeCore>().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("BAE1") && msg.contains("VQVAE1"), "{msg}");
        assert!("ConvM9".parse::<ConvPair>().is_err());
    }

    #[test]
    fn model_id_is_pair_dash_core() {
        let spec = ModelSpec {
            core: AeCore::Vqvae1,
            conv_pair: ConvPair::ConvM2,
            input: (1, 128, 256),
            latent: LatentConfig::default(),
            seed: 0,
        };
        assert_eq!(spec.model_id(), "ConvM2-VQVAE1");
    }
}
