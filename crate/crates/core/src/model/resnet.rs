//! 1D residual networks over `[B, C, T]` trials.
//!
//! Each residual block is `conv → BN → ELU → dropout → conv → BN` plus a skip
//! path, followed by ELU after the add. The skip is the identity when the
//! block keeps both channel count and time resolution, otherwise a K=1 conv
//! with batch norm.

use rand::RngCore;

use super::{Layer, Model, ModelBuilder, ModelConfig, Stage};
use crate::error::{Error, Result};
use crate::nn::ConvSpec;
use crate::tensor::Scalar;

/// Stage layout of a residual network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResnetPlan {
    pub stem_width: usize,
    pub stem_kernel: usize,
    /// `(width, kernel, stride of the first block, blocks)` per stage.
    pub stages: &'static [(usize, usize, usize, usize)],
}

/// Stem conv, 3 single-block stages (kernels 11, 9, 7), linear head.
pub const RESNET8_PLAN: ResnetPlan = ResnetPlan {
    stem_width: 32,
    stem_kernel: 11,
    stages: &[(32, 11, 2, 1), (64, 9, 2, 1), (128, 7, 2, 1)],
};

/// Stem conv, 4 stages of 2 basic blocks (all K=3), linear head.
pub const RESNET18_PLAN: ResnetPlan = ResnetPlan {
    stem_width: 32,
    stem_kernel: 3,
    stages: &[(32, 3, 1, 2), (64, 3, 2, 2), (128, 3, 2, 2), (256, 3, 2, 2)],
};

impl ResnetPlan {
    pub fn for_depth(depth: usize) -> Result<Self> {
        match depth {
            8 => Ok(RESNET8_PLAN),
            18 => Ok(RESNET18_PLAN),
            d => Err(Error::InvalidArgument(format!(
                "unsupported ResNet1D depth {d}, expected 8 or 18"
            ))),
        }
    }

    /// Weighted layers on the main path: stem, two per block, head.
    pub fn weighted_layers(&self) -> usize {
        1 + 2 * self.stages.iter().map(|s| s.3).sum::<usize>() + 1
    }

    pub fn largest_kernel(&self) -> usize {
        self.stages.iter().map(|s| s.1).fold(self.stem_kernel, usize::max)
    }
}

fn block<S: Scalar>(
    b: &mut ModelBuilder<'_, S>,
    name: &str,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    dropout: f64,
) -> Layer {
    let first = ConvSpec::new(in_ch, out_ch, kernel).same().stride(stride);
    let second = ConvSpec::new(out_ch, out_ch, kernel).same();
    let main = vec![
        b.conv(&format!("{name}.conv1"), first, false),
        b.batch_norm(&format!("{name}.bn1"), out_ch),
        Layer::Elu,
        Layer::Dropout(dropout),
        b.conv(&format!("{name}.conv2"), second, false),
        b.batch_norm(&format!("{name}.bn2"), out_ch),
    ];
    let skip = if in_ch == out_ch && stride == 1 {
        Vec::new()
    } else {
        vec![
            b.conv(&format!("{name}.skip"), ConvSpec::new(in_ch, out_ch, 1).stride(stride), false),
            b.batch_norm(&format!("{name}.skip_bn"), out_ch),
        ]
    };
    Layer::Residual { main, skip }
}

pub(super) fn build<S: Scalar>(cfg: &ModelConfig, rng: &mut dyn RngCore) -> Result<Model<S>> {
    let plan = ResnetPlan::for_depth(cfg.depth)?;
    if cfg.in_timesteps < plan.largest_kernel() {
        return Err(Error::InputTooShort {
            minimum: plan.largest_kernel(),
            got: cfg.in_timesteps,
        });
    }
    let p = cfg.dropout_p();
    let mut b = ModelBuilder::new(rng);

    let stem = ConvSpec::new(cfg.in_channels, plan.stem_width, plan.stem_kernel).same();
    let mut stages = Vec::with_capacity(plan.stages.len());
    let mut width = plan.stem_width;
    for (i, &(out, kernel, stride, blocks)) in plan.stages.iter().enumerate() {
        let tap = format!("block{}", i + 1);
        let mut layers = Vec::new();
        if i == 0 {
            layers.push(b.conv("stem.conv", stem, false));
            layers.push(b.batch_norm("stem.bn", plan.stem_width));
            layers.push(Layer::Elu);
        }
        for j in 0..blocks {
            let s = if j == 0 { stride } else { 1 };
            layers.push(block(&mut b, &format!("{tap}.{j}"), width, out, kernel, s, p));
            width = out;
        }
        stages.push(Stage { tap, layers });
    }
    let head = vec![Layer::GlobalAvgPool, b.linear("head", width, cfg.n_classes, true)];
    Ok(b.finish(cfg.clone(), stages, head))
}
