//! Finite-difference check of every parameter block through the full
//! forward pass and loss.

use std::fmt::Write as _;

use crate::error::Result;
use crate::model::{ClipTensors, ModelConfig, Trear};
use crate::rng::{streams, RngStream};
use crate::tensor::gradcheck::{check_param_grads, BlockCheck, GradCheckOptions, Probe};
use crate::tensor::{Graph, Mode, NdArray, OpKind, ParamStore, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckSettings {
    pub model: ModelConfig,
    pub image_side: usize,
    pub options: GradCheckOptions,
    /// Scales the backward rule of one op kind; a test fixture for showing
    /// that corrupted rules get flagged.
    pub fault: Option<(OpKind, f64)>,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                d_model: 16,
                frames: 4,
                heads_encoder: 2,
                heads_mutual: 2,
                num_classes: 3,
                ..ModelConfig::default()
            },
            image_side: 16,
            options: GradCheckOptions::default(),
            fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub seed: u64,
    pub tolerance: f64,
    pub blocks: Vec<BlockCheck>,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.blocks.iter().fold(0.0, |m, b| m.max(b.max_rel_error))
    }

    pub fn flagged(&self) -> Vec<&BlockCheck> {
        self.blocks.iter().filter(|b| b.flagged).collect()
    }

    pub fn passed(&self) -> bool {
        self.flagged().is_empty()
    }

    pub fn render(&self) -> String {
        let width = self
            .blocks
            .iter()
            .map(|b| b.name.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut out = format!(
            "{:<width$}  {:>7}  {:>8}  {:>12}  {:>12}\n",
            "block", "entries", "narrowed", "max_abs_err", "max_rel_err"
        );
        for b in &self.blocks {
            let _ = writeln!(
                out,
                "{:<width$}  {:>7}  {:>8}  {:>12.3e}  {:>12.3e}{}",
                b.name,
                b.checked,
                b.narrowed,
                b.max_abs_error,
                b.max_rel_error,
                if b.flagged { "  FLAGGED" } else { "" }
            );
        }
        let _ = writeln!(
            out,
            "seed {}: {} blocks, worst relative error {:.3e}, tolerance {:.0e}, {}",
            self.seed,
            self.blocks.len(),
            self.worst(),
            self.tolerance,
            if self.passed() { "PASS" } else { "FAIL" }
        );
        out
    }
}

fn random_frames(rng: &mut RngStream, k: usize, side: usize) -> Result<NdArray> {
    let data = (0..k * 3 * side * side).map(|_| rng.next_f64()).collect();
    NdArray::new(vec![k, 3, side, side], data)
}

fn clip_loss<'g>(
    model: &Trear,
    graph: &'g Graph,
    input: &ClipTensors,
    label: usize,
    seed: u64,
    fault: Option<(OpKind, f64)>,
) -> Result<Tensor<'g>> {
    if let Some((kind, factor)) = fault {
        graph.inject_backward_fault(kind, factor);
    }
    let mut dropout = RngStream::new(seed, streams::DROPOUT);
    model
        .forward(graph, input, Mode::Train, &mut dropout)?
        .loss(label)
}

/// Fresh model and random clip drawn from `seed`; train mode with one
/// dropout mask reused for every evaluation.
pub fn grad_check(seed: u64, settings: &GradCheckSettings) -> Result<GradCheckReport> {
    let cfg = &settings.model;
    let model = Trear::new(cfg.clone(), seed)?;
    let mut rng = RngStream::new(seed, streams::GRAD_CHECK);
    let input = ClipTensors {
        rgb: random_frames(&mut rng, cfg.frames, settings.image_side)?,
        depth: random_frames(&mut rng, cfg.frames, settings.image_side)?,
    };
    let label = rng.below_inclusive(cfg.num_classes - 1);

    let graph = Graph::new();
    let loss = clip_loss(&model, &graph, &input, label, seed, settings.fault)?;
    let analytic = graph.backward(loss)?.param_grads(model.params())?;
    let mut probe = model.clone();
    let numeric_loss = |params: &ParamStore| -> Result<Probe> {
        probe.params_mut().clone_from(params);
        let g = Graph::new();
        Ok(Probe::of(clip_loss(&probe, &g, &input, label, seed, None)?))
    };
    let options = GradCheckOptions {
        seed,
        ..settings.options.clone()
    };
    let blocks = check_param_grads(model.params(), &analytic, numeric_loss, &options)?;
    Ok(GradCheckReport {
        seed,
        tolerance: options.tolerance,
        blocks,
    })
}
