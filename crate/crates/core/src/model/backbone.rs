use super::config::BACKBONE_CHANNELS;
use super::layers::{Context, Initializer};
use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamId, Tensor};

pub const KERNEL: usize = 3;
pub const STRIDE: usize = 2;
pub const PAD: usize = 1;
pub const MIN_SIDE: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvBlock {
    pub weight: ParamId,
    pub bias: ParamId,
}

/// Three stride-2 3×3 conv + ReLU stages (3 → 8 → 16 → d_model channels)
/// followed by global average pooling. One instance per stream.
#[derive(Clone, Debug, PartialEq)]
pub struct TinyBackbone {
    pub blocks: Vec<ConvBlock>,
}

impl TinyBackbone {
    pub fn init(init: &mut Initializer<'_>, prefix: &str, d_model: usize) -> Result<Self> {
        let widths = [3, BACKBONE_CHANNELS[0], BACKBONE_CHANNELS[1], d_model];
        let mut blocks = Vec::with_capacity(3);
        for (i, pair) in widths.windows(2).enumerate() {
            let (cin, cout) = (pair[0], pair[1]);
            let area = KERNEL * KERNEL;
            blocks.push(ConvBlock {
                weight: init.glorot(
                    &format!("{prefix}.conv{}.weight", i + 1),
                    &[cout, cin, KERNEL, KERNEL],
                    cin * area,
                    cout * area,
                )?,
                bias: init.full(&format!("{prefix}.conv{}.bias", i + 1), &[cout], 0.0)?,
            });
        }
        Ok(Self { blocks })
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.blocks
            .iter()
            .flat_map(|b| [b.weight, b.bias])
            .collect()
    }
}

/// Maps `[k, 3, S, S]` frames to `[k, d_model]` embeddings, one row per
/// frame in temporal order.
pub fn embed_frames<'g>(
    graph: &'g Graph,
    cx: &Context<'_>,
    frames: Tensor<'g>,
    backbone: &TinyBackbone,
) -> Result<Tensor<'g>> {
    let shape = frames.shape();
    match shape[..] {
        [_, 3, h, w] if h == w && h >= MIN_SIDE => {}
        [_, c, ..] if c != 3 => {
            return Err(Error::Data(format!(
                "frames must have 3 channels, got shape {shape:?}"
            )))
        }
        _ => {
            return Err(Error::Data(format!(
                "frames must be [k, 3, S, S] with S >= {MIN_SIDE}, got {shape:?}"
            )))
        }
    }
    let mut x = frames;
    for block in &backbone.blocks {
        x = x
            .conv2d(
                &cx.bind(graph, block.weight),
                &cx.bind(graph, block.bias),
                STRIDE,
                PAD,
            )?
            .relu();
    }
    x.spatial_mean()
}
