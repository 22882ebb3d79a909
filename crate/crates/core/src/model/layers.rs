//! Parameter handles shared by the model blocks, plus initialisation.

use crate::error::Result;
use crate::rng::RngStream;
use crate::tensor::{Graph, Mode, NdArray, ParamId, ParamStore, Tensor};

/// Creates parameter blocks in a fixed order.
///
/// Weights are Glorot-uniform, biases and LayerNorm shifts zero, LayerNorm
/// scales one.
pub struct Initializer<'a> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut RngStream,
}

impl Initializer<'_> {
    pub fn glorot(
        &mut self,
        name: &str,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
    ) -> Result<ParamId> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let numel = shape.iter().product();
        let data = (0..numel)
            .map(|_| self.rng.uniform(-limit, limit))
            .collect();
        self.store.add(name, NdArray::new(shape.to_vec(), data)?)
    }

    pub fn full(&mut self, name: &str, shape: &[usize], value: f64) -> Result<ParamId> {
        self.store.add(name, NdArray::full(shape, value))
    }
}

/// Forward-pass context: parameter values, train/eval mode and the dropout
/// stream.
pub struct Context<'a> {
    pub params: &'a ParamStore,
    pub mode: Mode,
    pub dropout_rate: f64,
    pub layer_norm_eps: f64,
    pub rng: &'a mut RngStream,
}

impl Context<'_> {
    pub fn bind<'g>(&self, graph: &'g Graph, id: ParamId) -> Tensor<'g> {
        graph.param(self.params, id)
    }

    pub fn dropout<'g>(&mut self, x: Tensor<'g>) -> Result<Tensor<'g>> {
        x.dropout(self.dropout_rate, self.mode, self.rng)
    }
}

/// `x · W + b` over rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn init(
        init: &mut Initializer<'_>,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
    ) -> Result<Self> {
        Ok(Self {
            weight: init.glorot(
                &format!("{prefix}.weight"),
                &[fan_in, fan_out],
                fan_in,
                fan_out,
            )?,
            bias: init.full(&format!("{prefix}.bias"), &[fan_out], 0.0)?,
        })
    }

    pub fn forward<'g>(
        &self,
        graph: &'g Graph,
        cx: &Context<'_>,
        x: Tensor<'g>,
    ) -> Result<Tensor<'g>> {
        x.matmul(&cx.bind(graph, self.weight))?
            .add_row_bias(&cx.bind(graph, self.bias))
    }

    pub fn ids(&self) -> Vec<ParamId> {
        vec![self.weight, self.bias]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn init(init: &mut Initializer<'_>, prefix: &str, width: usize) -> Result<Self> {
        Ok(Self {
            gamma: init.full(&format!("{prefix}.gamma"), &[width], 1.0)?,
            beta: init.full(&format!("{prefix}.beta"), &[width], 0.0)?,
        })
    }

    pub fn forward<'g>(
        &self,
        graph: &'g Graph,
        cx: &Context<'_>,
        x: Tensor<'g>,
    ) -> Result<Tensor<'g>> {
        x.layer_norm(
            &cx.bind(graph, self.gamma),
            &cx.bind(graph, self.beta),
            cx.layer_norm_eps,
        )
    }

    pub fn ids(&self) -> Vec<ParamId> {
        vec![self.gamma, self.beta]
    }
}
