//! Scaled dot-product multi-head attention shared by the self-attention
//! encoder and the cross-modal mutual block.

use super::layers::{Context, Initializer, Linear};
use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamId, Tensor};

/// Per-head query, key and value projections, each `d_model × d_head`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadProjection {
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projections {
    pub heads: Vec<HeadProjection>,
}

impl Projections {
    pub fn init(
        init: &mut Initializer<'_>,
        prefix: &str,
        d_model: usize,
        heads: usize,
    ) -> Result<Self> {
        let d_head = d_model / heads;
        let mut out = Vec::with_capacity(heads);
        for h in 0..heads {
            let mut make = |role: &str| {
                init.glorot(
                    &format!("{prefix}.head{h}.{role}"),
                    &[d_model, d_head],
                    d_model,
                    d_head,
                )
            };
            out.push(HeadProjection {
                query: make("query")?,
                key: make("key")?,
                value: make("value")?,
            });
        }
        Ok(Self { heads: out })
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.heads
            .iter()
            .flat_map(|h| [h.query, h.key, h.value])
            .collect()
    }
}

/// Multi-head attention with queries from `query_src` and keys/values from
/// `context_src`.
///
/// Queries are projected with `query_proj`, keys and values with
/// `context_proj`; for self-attention both are the same set. Each head is
/// `softmax(Q Kᵀ / √d_head) V`; heads are concatenated and passed through
/// `output`. Returns the projected output and one `k×k` map per head.
pub fn multi_head_attention<'g>(
    graph: &'g Graph,
    cx: &Context<'_>,
    query_src: Tensor<'g>,
    context_src: Tensor<'g>,
    query_proj: &Projections,
    context_proj: &Projections,
    output: &Linear,
) -> Result<(Tensor<'g>, Vec<Tensor<'g>>)> {
    let heads = query_proj.heads.len();
    if heads == 0 || heads != context_proj.heads.len() {
        return Err(Error::Config(format!(
            "query side has {heads} heads, context side {}",
            context_proj.heads.len()
        )));
    }
    let q_shape = query_src.shape();
    let c_shape = context_src.shape();
    if q_shape.len() != 2 || c_shape.len() != 2 || q_shape[1] != c_shape[1] {
        return Err(Error::Config(format!(
            "attention sources must be k × d_model, got {q_shape:?} and {c_shape:?}"
        )));
    }
    let d_model = q_shape[1];
    let d_head = cx.params.get(query_proj.heads[0].query).shape()[1];
    if d_head * heads != d_model {
        return Err(Error::Config(format!(
            "{heads} heads of width {d_head} do not tile d_model {d_model}"
        )));
    }
    let scale = 1.0 / (d_head as f64).sqrt();

    let mut outputs = Vec::with_capacity(heads);
    let mut maps = Vec::with_capacity(heads);
    for (qp, cp) in query_proj.heads.iter().zip(&context_proj.heads) {
        let q = query_src.matmul(&cx.bind(graph, qp.query))?;
        let k = context_src.matmul(&cx.bind(graph, cp.key))?;
        let v = context_src.matmul(&cx.bind(graph, cp.value))?;
        let weights = q.matmul(&k.transpose()?)?.scale(scale).softmax(1)?;
        outputs.push(weights.matmul(&v)?);
        maps.push(weights);
    }
    let joined = Tensor::concat_cols(&outputs)?;
    Ok((output.forward(graph, cx, joined)?, maps))
}
