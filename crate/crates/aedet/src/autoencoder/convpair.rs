//! Published layer tables for the six conv encoder/decoder pairs.
//!
//! Encoders shrink the spatial resolution by a fixed power of two
//! (strided convs or max-pooling); decoders grow it back with transposed
//! convs or nearest-neighbor upsampling. Every conv is followed by batch
//! norm and an activation except each decoder's final output conv, which
//! uses a plain sigmoid.

use super::ConvPair;

/// One encoder operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncOp {
    /// Same-padded convolution.
    Conv { filters: usize, kernel: usize, stride: usize },
    /// 2x2 max-pool.
    Pool,
}

/// One decoder operation. `filters: 0` in [`DecOp::OutConv`] and
/// [`DecOp::ConvTOut`] stands for "as many channels as the input image";
/// it is resolved when the plan is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecOp {
    /// Same-padded stride-1 convolution.
    Conv { filters: usize, kernel: usize },
    /// Stride-2 transposed convolution (doubles the resolution).
    ConvT { filters: usize, kernel: usize },
    /// Nearest-neighbor 2x upsampling.
    Up,
    /// Final stride-1 output convolution (sigmoid, no batch norm).
    OutConv { kernel: usize },
    /// Final stride-2 transposed output convolution (sigmoid, no batch norm).
    ConvTOut { kernel: usize },
}

impl DecOp {
    /// Whether this op is one of the two terminal output convs.
    pub fn is_output(self) -> bool {
        matches!(self, DecOp::OutConv { .. } | DecOp::ConvTOut { .. })
    }

    /// Whether this op doubles the spatial resolution.
    pub fn upsamples(self) -> bool {
        matches!(self, DecOp::Up | DecOp::ConvT { .. } | DecOp::ConvTOut { .. })
    }
}

/// Encoder table for a pair. `ConvM6` reuses the `ConvM5` encoder.
pub fn encoder_ops(pair: ConvPair) -> Vec<EncOp> {
    use EncOp::*;
    match pair {
        ConvPair::ConvM1 => vec![
            Conv { filters: 32, kernel: 3, stride: 2 },
            Conv { filters: 64, kernel: 3, stride: 2 },
            Conv { filters: 64, kernel: 3, stride: 2 },
            Conv { filters: 64, kernel: 3, stride: 2 },
            Conv { filters: 64, kernel: 3, stride: 2 },
        ],
        ConvPair::ConvM2 => vec![
            Conv { filters: 32, kernel: 4, stride: 2 },
            Conv { filters: 32, kernel: 4, stride: 2 },
            Conv { filters: 32, kernel: 3, stride: 1 },
            Conv { filters: 64, kernel: 4, stride: 2 },
            Conv { filters: 64, kernel: 3, stride: 1 },
            Conv { filters: 128, kernel: 4, stride: 2 },
            Conv { filters: 64, kernel: 3, stride: 1 },
            Conv { filters: 32, kernel: 3, stride: 1 },
            Conv { filters: 1, kernel: 8, stride: 1 },
        ],
        ConvPair::ConvM3 => vec![
            Conv { filters: 32, kernel: 3, stride: 2 },
            Conv { filters: 64, kernel: 3, stride: 2 },
        ],
        ConvPair::ConvM4 => vec![
            Conv { filters: 8, kernel: 5, stride: 1 },
            Pool,
            Conv { filters: 4, kernel: 3, stride: 1 },
            Pool,
        ],
        ConvPair::ConvM5 | ConvPair::ConvM6 => vec![
            Conv { filters: 16, kernel: 3, stride: 1 },
            Pool,
            Conv { filters: 8, kernel: 3, stride: 1 },
            Pool,
            Conv { filters: 4, kernel: 3, stride: 1 },
            Pool,
        ],
    }
}

/// Decoder table for a pair. `ConvM6` reuses the `ConvM4` decoder.
pub fn decoder_ops(pair: ConvPair) -> Vec<DecOp> {
    use DecOp::*;
    match pair {
        ConvPair::ConvM1 => vec![
            ConvT { filters: 64, kernel: 3 },
            ConvT { filters: 64, kernel: 3 },
            ConvT { filters: 64, kernel: 3 },
            ConvT { filters: 32, kernel: 3 },
            ConvTOut { kernel: 3 },
        ],
        ConvPair::ConvM2 => vec![
            Conv { filters: 16, kernel: 3 },
            Conv { filters: 64, kernel: 3 },
            Up,
            Conv { filters: 128, kernel: 4 },
            Up,
            Conv { filters: 64, kernel: 3 },
            Up,
            Conv { filters: 64, kernel: 4 },
            Up,
            Conv { filters: 32, kernel: 3 },
            Up,
            Conv { filters: 32, kernel: 4 },
            Up,
            Conv { filters: 32, kernel: 4 },
            Up,
            OutConv { kernel: 8 },
        ],
        ConvPair::ConvM3 => vec![
            Conv { filters: 64, kernel: 3 },
            Conv { filters: 32, kernel: 3 },
            Up,
            OutConv { kernel: 3 },
        ],
        ConvPair::ConvM4 | ConvPair::ConvM6 => vec![
            Conv { filters: 4, kernel: 3 },
            Up,
            Conv { filters: 8, kernel: 3 },
            Up,
            OutConv { kernel: 3 },
        ],
        ConvPair::ConvM5 => vec![
            Conv { filters: 4, kernel: 3 },
            Up,
            Conv { filters: 8, kernel: 3 },
            Up,
            Conv { filters: 16, kernel: 3 },
            Up,
            OutConv { kernel: 3 },
        ],
    }
}

/// Total factor by which the encoder shrinks each spatial dimension.
pub fn downsample_factor(pair: ConvPair) -> usize {
    encoder_ops(pair)
        .iter()
        .map(|op| match op {
            EncOp::Conv { stride, .. } => *stride,
            EncOp::Pool => 2,
        })
        .product()
}
