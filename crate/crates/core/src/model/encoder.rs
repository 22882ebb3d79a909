use super::attention::{multi_head_attention, Projections};
use super::layers::{Context, Initializer, LayerNorm, Linear};
use crate::error::Result;
use crate::tensor::{Graph, ParamId, Tensor};

/// One post-norm transformer encoder layer over the frame sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayer {
    pub attention: Projections,
    pub attention_out: Linear,
    pub norm1: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
    pub norm2: LayerNorm,
}

impl EncoderLayer {
    pub fn init(
        init: &mut Initializer<'_>,
        prefix: &str,
        d_model: usize,
        heads: usize,
        ffn_hidden: usize,
    ) -> Result<Self> {
        Ok(Self {
            attention: Projections::init(init, &format!("{prefix}.attn"), d_model, heads)?,
            attention_out: Linear::init(init, &format!("{prefix}.attn.out"), d_model, d_model)?,
            norm1: LayerNorm::init(init, &format!("{prefix}.ln1"), d_model)?,
            ffn_in: Linear::init(init, &format!("{prefix}.ffn.in"), d_model, ffn_hidden)?,
            ffn_out: Linear::init(init, &format!("{prefix}.ffn.out"), ffn_hidden, d_model)?,
            norm2: LayerNorm::init(init, &format!("{prefix}.ln2"), d_model)?,
        })
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = self.attention.ids();
        for part in [
            self.attention_out.ids(),
            self.norm1.ids(),
            self.ffn_in.ids(),
            self.ffn_out.ids(),
            self.norm2.ids(),
        ] {
            ids.extend(part);
        }
        ids
    }
}

/// Intermediate values of one encoder layer.
#[derive(Clone, Debug)]
pub struct EncoderLayerTrace<'g> {
    /// `LN(F + Dropout(MHA(F)))`.
    pub post_attention: Tensor<'g>,
    /// Layer output.
    pub output: Tensor<'g>,
    pub maps: Vec<Tensor<'g>>,
}

/// Runs `layers` in sequence; each is
/// `f' = LN(F + Dropout(MHA(F)))`, `F' = LN(f' + Dropout(FFN(f')))`
/// with a ReLU feed-forward block.
pub fn encoder_forward<'g>(
    graph: &'g Graph,
    cx: &mut Context<'_>,
    input: Tensor<'g>,
    layers: &[EncoderLayer],
) -> Result<(Tensor<'g>, Vec<EncoderLayerTrace<'g>>)> {
    let mut x = input;
    let mut traces = Vec::with_capacity(layers.len());
    for layer in layers {
        let (attended, maps) = multi_head_attention(
            graph,
            cx,
            x,
            x,
            &layer.attention,
            &layer.attention,
            &layer.attention_out,
        )?;
        let attended = cx.dropout(attended)?;
        let post_attention = layer.norm1.forward(graph, cx, x.add(&attended)?)?;

        let hidden = layer.ffn_in.forward(graph, cx, post_attention)?.relu();
        let ffn = layer.ffn_out.forward(graph, cx, hidden)?;
        let ffn = cx.dropout(ffn)?;
        let output = layer.norm2.forward(graph, cx, post_attention.add(&ffn)?)?;

        traces.push(EncoderLayerTrace {
            post_attention,
            output,
            maps,
        });
        x = output;
    }
    Ok((x, traces))
}
