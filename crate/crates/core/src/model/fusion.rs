//! Cross-modal mutual attention, stream fusion and the per-frame classifier.

use super::attention::{multi_head_attention, Projections};
use super::config::{ClipAggregation, FusionMode};
use super::layers::{Context, Initializer, LayerNorm, Linear};
use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamId, Tensor};

/// Projections, output maps and norms of one modality inside the mutual
/// block. Queries of this modality attend over the other modality's keys
/// and values.
#[derive(Clone, Debug, PartialEq)]
pub struct MutualSide {
    pub projections: Projections,
    pub output: Linear,
    pub norm: LayerNorm,
}

impl MutualSide {
    fn init(
        init: &mut Initializer<'_>,
        prefix: &str,
        d_model: usize,
        heads: usize,
    ) -> Result<Self> {
        Ok(Self {
            projections: Projections::init(init, prefix, d_model, heads)?,
            output: Linear::init(init, &format!("{prefix}.out"), d_model, d_model)?,
            norm: LayerNorm::init(init, &format!("{prefix}.ln"), d_model)?,
        })
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = self.projections.ids();
        ids.extend(self.output.ids());
        ids.extend(self.norm.ids());
        ids
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MutualBlock {
    pub rgb: MutualSide,
    pub depth: MutualSide,
}

impl MutualBlock {
    pub fn init(
        init: &mut Initializer<'_>,
        prefix: &str,
        d_model: usize,
        heads: usize,
    ) -> Result<Self> {
        Ok(Self {
            rgb: MutualSide::init(init, &format!("{prefix}.rgb"), d_model, heads)?,
            depth: MutualSide::init(init, &format!("{prefix}.depth"), d_model, heads)?,
        })
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = self.rgb.ids();
        ids.extend(self.depth.ids());
        ids
    }
}

#[derive(Clone, Debug)]
pub struct MutualOutput<'g> {
    pub rgb: Tensor<'g>,
    pub depth: Tensor<'g>,
    /// RGB queries over depth context, one map per head.
    pub rgb2depth: Vec<Tensor<'g>>,
    /// Depth queries over RGB context, one map per head.
    pub depth2rgb: Vec<Tensor<'g>>,
}

/// Each modality queries the other, then dropout, a residual from its own
/// stream and LayerNorm. No feed-forward stage.
pub fn mutual_attention<'g>(
    graph: &'g Graph,
    cx: &mut Context<'_>,
    rgb: Tensor<'g>,
    depth: Tensor<'g>,
    block: &MutualBlock,
) -> Result<MutualOutput<'g>> {
    let (rs, ds) = (rgb.shape(), depth.shape());
    if rs != ds || rs.len() != 2 {
        return Err(Error::Config(format!(
            "mutual attention needs matching k × d_model streams, got {rs:?} and {ds:?}"
        )));
    }
    let (from_depth, rgb2depth) = multi_head_attention(
        graph,
        cx,
        rgb,
        depth,
        &block.rgb.projections,
        &block.depth.projections,
        &block.rgb.output,
    )?;
    let (from_rgb, depth2rgb) = multi_head_attention(
        graph,
        cx,
        depth,
        rgb,
        &block.depth.projections,
        &block.rgb.projections,
        &block.depth.output,
    )?;
    let from_depth = cx.dropout(from_depth)?;
    let rgb_out = block.rgb.norm.forward(graph, cx, rgb.add(&from_depth)?)?;
    let from_rgb = cx.dropout(from_rgb)?;
    let depth_out = block.depth.norm.forward(graph, cx, depth.add(&from_rgb)?)?;
    Ok(MutualOutput {
        rgb: rgb_out,
        depth: depth_out,
        rgb2depth,
        depth2rgb,
    })
}

/// Per-frame combination of the two streams.
pub fn fuse<'g>(rgb: Tensor<'g>, depth: Tensor<'g>, mode: FusionMode) -> Result<Tensor<'g>> {
    match mode {
        FusionMode::Add => rgb.add(&depth),
        FusionMode::Multiply => rgb.mul(&depth),
        FusionMode::Concat => Tensor::concat_cols(&[rgb, depth]),
    }
}

/// Shared affine map from fused frame features to class logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub linear: Linear,
}

impl Classifier {
    pub fn init(init: &mut Initializer<'_>, width: usize, classes: usize) -> Result<Self> {
        Ok(Self {
            linear: Linear::init(init, "classifier", width, classes)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct ClassifierOutput<'g> {
    /// `k × num_classes`.
    pub per_frame_logits: Tensor<'g>,
    /// Mean of per-frame logits, or of per-frame probabilities.
    pub clip_scores: Tensor<'g>,
    pub aggregation: ClipAggregation,
}

impl<'g> ClassifierOutput<'g> {
    /// Loss of the clip prediction for `label`.
    pub fn loss(&self, label: usize) -> Result<Tensor<'g>> {
        match self.aggregation {
            ClipAggregation::Logits => self.clip_scores.cross_entropy(label),
            ClipAggregation::Probabilities => self.clip_scores.neg_log_at(label),
        }
    }
}

pub fn classify<'g>(
    graph: &'g Graph,
    cx: &Context<'_>,
    fused: Tensor<'g>,
    classifier: &Classifier,
    aggregation: ClipAggregation,
) -> Result<ClassifierOutput<'g>> {
    let width = cx.params.get(classifier.linear.weight).shape()[0];
    let shape = fused.shape();
    if shape.len() != 2 || shape[1] != width {
        return Err(Error::Config(format!(
            "classifier expects k × {width} features, got {shape:?}"
        )));
    }
    let per_frame_logits = classifier.linear.forward(graph, cx, fused)?;
    let clip_scores = match aggregation {
        ClipAggregation::Logits => per_frame_logits.mean_rows()?,
        ClipAggregation::Probabilities => per_frame_logits.softmax(1)?.mean_rows()?,
    };
    Ok(ClassifierOutput {
        per_frame_logits,
        clip_scores,
        aggregation,
    })
}
