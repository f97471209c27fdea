//! Shape planning: walks the published layer tables for a concrete input
//! size, repairs the decoder's upsampling count where the tables do not
//! restore the input resolution exactly, and records an auditable
//! per-layer shape trace.
//!
//! The published decoders assume particular input sizes. To support every
//! pair at every canonical resolution the decoder is resolved as follows:
//! an upsampling step only applies while the running resolution is below
//! the target (surplus steps are skipped and noted), and immediately
//! before the final output conv extra upsampling steps are inserted (and
//! noted) until the output lands exactly on the input resolution.

use super::convpair::{decoder_ops, downsample_factor, encoder_ops, DecOp, EncOp};
use super::{AeCore, ModelSpec};
use crate::error::{Error, Result};

/// Which part of the network a plan entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanStage {
    Encoder,
    Bottleneck,
    Decoder,
}

/// Provenance of a decoder step relative to the published table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanNote {
    /// Step taken from the published table as-is.
    AsPublished,
    /// Published upsampling step that was skipped (resolution already met).
    SkippedUpsample,
    /// Upsampling step inserted to reach the target resolution.
    InsertedUpsample,
}

/// One row of the shape audit.
#[derive(Debug, Clone)]
pub struct PlanEntry {
    pub stage: PlanStage,
    pub description: String,
    /// Shape after this step as `(channels, height, width)`. Skipped steps
    /// repeat the previous shape.
    pub out_shape: (usize, usize, usize),
    pub note: PlanNote,
}

/// A fully resolved network layout for one [`ModelSpec`].
#[derive(Debug, Clone)]
pub struct ModelPlan {
    pub input: (usize, usize, usize),
    /// Encoder output shape (the conv bottleneck the core operates on).
    pub encoded: (usize, usize, usize),
    pub output: (usize, usize, usize),
    pub entries: Vec<PlanEntry>,
    pub skipped_upsamples: usize,
    pub inserted_upsamples: usize,
    pub(super) enc_ops: Vec<EncOp>,
    /// Decoder ops actually built. Skipped table entries are not included;
    /// they appear only in the audit rows.
    pub(super) dec_ops: Vec<DecOp>,
    pub(super) leaky: bool,
}

impl ModelPlan {
    /// Human-readable per-layer shape dump.
    pub fn render(&self, spec: &ModelSpec) -> String {
        let mut out = format!(
            "{} on input ({}, {}, {})\n",
            spec.model_id(),
            self.input.0,
            self.input.1,
            self.input.2
        );
        for entry in &self.entries {
            let stage = match entry.stage {
                PlanStage::Encoder => "encoder",
                PlanStage::Bottleneck => "bottleneck",
                PlanStage::Decoder => "decoder",
            };
            let note = match entry.note {
                PlanNote::AsPublished => "",
                PlanNote::SkippedUpsample => " [skipped]",
                PlanNote::InsertedUpsample => " [inserted]",
            };
            let (c, h, w) = entry.out_shape;
            out.push_str(&format!(
                "  [{stage:<10}] {:<44} -> ({c}, {h}, {w}){note}\n",
                entry.description
            ));
        }
        out
    }
}

fn activation_name(leaky: bool) -> &'static str {
    if leaky {
        "LeakyReLU(0.3)"
    } else {
        "ReLU"
    }
}

/// Resolve the layer layout for `spec`, validating the input shape and
/// bottleneck sizes.
pub fn resolve_plan(spec: &ModelSpec) -> Result<ModelPlan> {
    let (in_c, in_h, in_w) = spec.input;
    if in_c == 0 || in_h == 0 || in_w == 0 {
        return Err(Error::Shape(format!(
            "model input has zero dimension: ({in_c}, {in_h}, {in_w})"
        )));
    }
    let factor = downsample_factor(spec.conv_pair);
    if in_h % factor != 0 || in_w % factor != 0 {
        return Err(Error::Shape(format!(
            "{} downsamples by {factor}; input {in_h}x{in_w} must be divisible by it",
            spec.conv_pair
        )));
    }
    validate_latent(spec)?;

    let leaky = spec.conv_pair == super::ConvPair::ConvM1;
    let act = activation_name(leaky);
    let mut entries = Vec::new();

    // Encoder walk.
    let enc_ops = encoder_ops(spec.conv_pair);
    let (mut c, mut h, mut w) = (in_c, in_h, in_w);
    for op in &enc_ops {
        match *op {
            EncOp::Conv { filters, kernel, stride } => {
                c = filters;
                h = h.div_ceil(stride);
                w = w.div_ceil(stride);
                entries.push(PlanEntry {
                    stage: PlanStage::Encoder,
                    description: format!("Conv {kernel}x{kernel} s{stride} -> {filters} + BN + {act}"),
                    out_shape: (c, h, w),
                    note: PlanNote::AsPublished,
                });
            }
            EncOp::Pool => {
                h /= 2;
                w /= 2;
                entries.push(PlanEntry {
                    stage: PlanStage::Encoder,
                    description: "MaxPool 2x2".to_string(),
                    out_shape: (c, h, w),
                    note: PlanNote::AsPublished,
                });
            }
        }
    }
    let encoded = (c, h, w);
    entries.extend(bottleneck_entries(spec, encoded));

    // Decoder walk with upsampling repair.
    let mut dec_ops = Vec::new();
    let mut skipped = 0usize;
    let mut inserted = 0usize;
    for op in decoder_ops(spec.conv_pair) {
        if op.is_output() {
            // The output conv must land exactly on the input resolution;
            // top up the resolution first if the table falls short.
            let needed = if op.upsamples() { in_h / 2 } else { in_h };
            while h < needed {
                h *= 2;
                w *= 2;
                inserted += 1;
                dec_ops.push(DecOp::Up);
                entries.push(PlanEntry {
                    stage: PlanStage::Decoder,
                    description: "Upsample 2x".to_string(),
                    out_shape: (c, h, w),
                    note: PlanNote::InsertedUpsample,
                });
            }
        }
        match op {
            DecOp::Conv { filters, kernel } => {
                c = filters;
                dec_ops.push(op);
                entries.push(PlanEntry {
                    stage: PlanStage::Decoder,
                    description: format!("Conv {kernel}x{kernel} s1 -> {filters} + BN + {act}"),
                    out_shape: (c, h, w),
                    note: PlanNote::AsPublished,
                });
            }
            DecOp::ConvT { filters, kernel } => {
                if h >= in_h {
                    return Err(Error::Shape(format!(
                        "{} decoder overshoots {in_h}x{in_w} at a transposed conv",
                        spec.conv_pair
                    )));
                }
                c = filters;
                h *= 2;
                w *= 2;
                dec_ops.push(op);
                entries.push(PlanEntry {
                    stage: PlanStage::Decoder,
                    description: format!("ConvT {kernel}x{kernel} s2 -> {filters} + BN + {act}"),
                    out_shape: (c, h, w),
                    note: PlanNote::AsPublished,
                });
            }
            DecOp::Up => {
                if h < in_h {
                    h *= 2;
                    w *= 2;
                    dec_ops.push(op);
                    entries.push(PlanEntry {
                        stage: PlanStage::Decoder,
                        description: "Upsample 2x".to_string(),
                        out_shape: (c, h, w),
                        note: PlanNote::AsPublished,
                    });
                } else {
                    skipped += 1;
                    entries.push(PlanEntry {
                        stage: PlanStage::Decoder,
                        description: "Upsample 2x".to_string(),
                        out_shape: (c, h, w),
                        note: PlanNote::SkippedUpsample,
                    });
                }
            }
            DecOp::OutConv { kernel } => {
                c = in_c;
                dec_ops.push(op);
                entries.push(PlanEntry {
                    stage: PlanStage::Decoder,
                    description: format!("Conv {kernel}x{kernel} s1 -> {in_c} + Sigmoid"),
                    out_shape: (c, h, w),
                    note: PlanNote::AsPublished,
                });
            }
            DecOp::ConvTOut { kernel } => {
                c = in_c;
                h *= 2;
                w *= 2;
                dec_ops.push(op);
                entries.push(PlanEntry {
                    stage: PlanStage::Decoder,
                    description: format!("ConvT {kernel}x{kernel} s2 -> {in_c} + Sigmoid"),
                    out_shape: (c, h, w),
                    note: PlanNote::AsPublished,
                });
            }
        }
    }

    let output = (c, h, w);
    if output != spec.input {
        return Err(Error::Shape(format!(
            "{}: resolved decoder produces ({}, {}, {}) for input ({in_c}, {in_h}, {in_w})",
            spec.conv_pair, output.0, output.1, output.2
        )));
    }

    Ok(ModelPlan {
        input: spec.input,
        encoded,
        output,
        entries,
        skipped_upsamples: skipped,
        inserted_upsamples: inserted,
        enc_ops,
        dec_ops,
        leaky,
    })
}

fn validate_latent(spec: &ModelSpec) -> Result<()> {
    let latent = &spec.latent;
    let bad = |what: &str| Err(Error::Config(format!("{what} must be positive for {}", spec.core)));
    match spec.core {
        AeCore::Bae1 => Ok(()),
        AeCore::Bae2 => {
            if latent.fc_width == 0 {
                return bad("fc_width");
            }
            Ok(())
        }
        AeCore::Vae1 => {
            if latent.latent_channels == 0 {
                return bad("latent_channels");
            }
            Ok(())
        }
        AeCore::Vae2 => {
            if latent.fc_width == 0 {
                return bad("fc_width");
            }
            if latent.latent_channels == 0 {
                return bad("latent_channels");
            }
            Ok(())
        }
        AeCore::Vqvae1 => {
            if latent.codebook_size == 0 {
                return bad("codebook_size");
            }
            if latent.embedding_dim == 0 {
                return bad("embedding_dim");
            }
            Ok(())
        }
    }
}

fn bottleneck_entries(spec: &ModelSpec, encoded: (usize, usize, usize)) -> Vec<PlanEntry> {
    let (c, h, w) = encoded;
    let flat = c * h * w;
    let latent = &spec.latent;
    let row = |description: String, out_shape| PlanEntry {
        stage: PlanStage::Bottleneck,
        description,
        out_shape,
        note: PlanNote::AsPublished,
    };
    match spec.core {
        AeCore::Bae1 => vec![row("Identity".to_string(), encoded)],
        AeCore::Bae2 => vec![
            row(format!("Flatten {flat}"), (flat, 1, 1)),
            row(format!("Dense {flat} -> {} + ReLU", latent.fc_width), (latent.fc_width, 1, 1)),
            row(format!("Dense {} -> {flat} + ReLU", latent.fc_width), (flat, 1, 1)),
            row(format!("Reshape ({c}, {h}, {w})"), encoded),
        ],
        AeCore::Vae1 => vec![
            row(format!("Conv 1x1 mu/logvar -> {}", latent.latent_channels), (latent.latent_channels, h, w)),
            row("Sample z".to_string(), (latent.latent_channels, h, w)),
            row(format!("Conv 1x1 -> {c} + ReLU"), encoded),
        ],
        AeCore::Vae2 => vec![
            row(format!("Flatten {flat}"), (flat, 1, 1)),
            row(format!("Dense {flat} -> {} + ReLU", latent.fc_width), (latent.fc_width, 1, 1)),
            row(
                format!("Dense {} -> {} mu/logvar", latent.fc_width, latent.latent_channels),
                (latent.latent_channels, 1, 1),
            ),
            row("Sample z".to_string(), (latent.latent_channels, 1, 1)),
            row(
                format!("Dense {} -> {} + ReLU", latent.latent_channels, latent.fc_width),
                (latent.fc_width, 1, 1),
            ),
            row(format!("Dense {} -> {flat} + ReLU", latent.fc_width), (flat, 1, 1)),
            row(format!("Reshape ({c}, {h}, {w})"), encoded),
        ],
        AeCore::Vqvae1 => vec![
            row(format!("Conv 1x1 -> {}", latent.embedding_dim), (latent.embedding_dim, h, w)),
            row(
                format!("VectorQuantize K={} D={}", latent.codebook_size, latent.embedding_dim),
                (latent.embedding_dim, h, w),
            ),
            row(format!("Conv 1x1 -> {c} + ReLU"), encoded),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::super::{ConvPair, LatentConfig};
    use super::*;

    fn spec(core: AeCore, pair: ConvPair, input: (usize, usize, usize)) -> ModelSpec {
        ModelSpec { core, conv_pair: pair, input, latent: LatentConfig::default(), seed: 7 }
    }

    #[test]
    fn convm1_restores_shape_without_repair() {
        let plan = resolve_plan(&spec(AeCore::Bae1, ConvPair::ConvM1, (1, 128, 256))).unwrap();
        assert_eq!(plan.encoded, (64, 4, 8));
        assert_eq!(plan.output, (1, 128, 256));
        assert_eq!(plan.skipped_upsamples, 0);
        assert_eq!(plan.inserted_upsamples, 0);
    }

    #[test]
    fn convm2_skips_surplus_upsamples() {
        // Factor 16 but the table lists 7 upsampling steps: 3 are skipped.
        let plan = resolve_plan(&spec(AeCore::Bae1, ConvPair::ConvM2, (1, 128, 128))).unwrap();
        assert_eq!(plan.encoded, (1, 8, 8));
        assert_eq!(plan.skipped_upsamples, 3);
        assert_eq!(plan.inserted_upsamples, 0);
        assert_eq!(plan.output, (1, 128, 128));
        let skipped = plan
            .entries
            .iter()
            .filter(|e| e.note == PlanNote::SkippedUpsample)
            .count();
        assert_eq!(skipped, 3);
    }

    #[test]
    fn convm3_inserts_a_missing_upsample() {
        // Factor 4 but the table lists a single upsampling step.
        let plan = resolve_plan(&spec(AeCore::Bae1, ConvPair::ConvM3, (3, 128, 512))).unwrap();
        assert_eq!(plan.encoded, (64, 32, 128));
        assert_eq!(plan.skipped_upsamples, 0);
        assert_eq!(plan.inserted_upsamples, 1);
        assert_eq!(plan.output, (3, 128, 512));
        // The inserted step sits immediately before the output conv.
        let decoder: Vec<_> = plan
            .entries
            .iter()
            .filter(|e| e.stage == PlanStage::Decoder)
            .collect();
        let last = decoder.len() - 1;
        assert!(decoder[last].description.contains("Sigmoid"));
        assert_eq!(decoder[last - 1].note, PlanNote::InsertedUpsample);
    }

    #[test]
    fn convm6_inherits_mismatch_and_repairs_it() {
        // ConvM5 encoder shrinks by 8; the ConvM4 decoder only doubles twice.
        let plan = resolve_plan(&spec(AeCore::Bae1, ConvPair::ConvM6, (1, 128, 128))).unwrap();
        assert_eq!(plan.inserted_upsamples, 1);
        assert_eq!(plan.output, (1, 128, 128));
    }

    #[test]
    fn all_pairs_round_trip_every_canonical_size() {
        for pair in ConvPair::ALL {
            for (h, w) in [(128, 128), (128, 256), (128, 512)] {
                let plan = resolve_plan(&spec(AeCore::Bae1, pair, (1, h, w))).unwrap();
                assert_eq!(plan.output, (1, h, w), "{pair} at {h}x{w}");
            }
        }
    }

    #[test]
    fn indivisible_input_is_a_shape_error() {
        let err = resolve_plan(&spec(AeCore::Bae1, ConvPair::ConvM1, (1, 100, 128))).unwrap_err();
        assert!(matches!(err, Error::Shape(_)), "{err}");
        assert!(err.to_string().contains("32"));
    }

    #[test]
    fn zero_latent_sizes_are_config_errors() {
        let mut s = spec(AeCore::Vqvae1, ConvPair::ConvM3, (1, 128, 128));
        s.latent.codebook_size = 0;
        assert!(matches!(resolve_plan(&s).unwrap_err(), Error::Config(_)));
        let mut s = spec(AeCore::Bae2, ConvPair::ConvM3, (1, 128, 128));
        s.latent.fc_width = 0;
        assert!(matches!(resolve_plan(&s).unwrap_err(), Error::Config(_)));
    }

    #[test]
    fn render_marks_repairs() {
        let s = spec(AeCore::Bae1, ConvPair::ConvM2, (1, 128, 128));
        let plan = resolve_plan(&s).unwrap();
        let text = plan.render(&s);
        assert!(text.contains("[skipped]"), "{text}");
        let s = spec(AeCore::Bae1, ConvPair::ConvM3, (1, 128, 128));
        let plan = resolve_plan(&s).unwrap();
        assert!(plan.render(&s).contains("[inserted]"));
    }

    #[test]
    fn bottleneck_rows_cover_every_core() {
        for core in AeCore::ALL {
            let plan = resolve_plan(&spec(core, ConvPair::ConvM3, (1, 128, 128))).unwrap();
            assert!(plan.entries.iter().any(|e| e.stage == PlanStage::Bottleneck), "{core}");
        }
    }
}
