//! Central finite differences against the analytic backward pass.
//!
//! Only forward values are used to build the numeric estimate, so it stays
//! independent of every backward rule it checks.
//!
//! Error metric per block: `max_i |a_i - n_i| / max(max_i |a_i|, max_i |n_i|, floor)`.
//! The floor keeps blocks with vanishing gradients from turning round-off
//! noise into a large ratio.
//!
//! A difference quotient is meaningless when `x ± h` falls on another
//! linear piece of some ReLU than `x`. The loss reports which piece it is
//! on ([`Graph::relu_signature`]); on a mismatch the step shrinks tenfold,
//! down to [`MIN_STEP`], so every entry is still checked.

use super::{Graph, NdArray, ParamStore, Tensor};
use crate::error::Result;
use crate::rng::{streams, RngStream};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    pub floor: f64,
    /// Check at most this many entries per block, drawn without replacement.
    pub max_entries_per_block: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
            max_entries_per_block: None,
            seed: 0,
        }
    }
}

/// Smallest step tried when a probe straddles a ReLU kink.
pub const MIN_STEP: f64 = 1e-9;

/// A loss value and the ReLU piece it was evaluated on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probe {
    pub value: f64,
    pub signature: u64,
}

impl Probe {
    /// Value and signature of `loss`'s graph.
    pub fn of(loss: Tensor<'_>) -> Self {
        Self {
            value: loss.item(),
            signature: loss.graph().relu_signature(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockCheck {
    pub name: String,
    pub checked: usize,
    /// Entries whose step had to shrink to stay off a ReLU kink.
    pub narrowed: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub flagged: bool,
}

pub fn relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(floor, |m, v| m.max(v.abs()));
    max_abs_diff(analytic, numeric) / scale
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Central difference at one coordinate. `at(offset)` evaluates the loss
/// with that coordinate moved by `offset`. Returns the estimate and whether
/// the step was narrowed.
fn central_difference(
    mut at: impl FnMut(f64) -> Result<Probe>,
    base: u64,
    step: f64,
) -> Result<(f64, bool)> {
    let mut h = step;
    loop {
        let up = at(h)?;
        let down = at(-h)?;
        let same_piece = up.signature == base && down.signature == base;
        if same_piece || h / 10.0 < MIN_STEP {
            return Ok(((up.value - down.value) / (2.0 * h), h < step));
        }
        h /= 10.0;
    }
}

/// Entry indices to probe in a block of `len` values.
fn probe_indices(len: usize, limit: Option<usize>, rng: &mut RngStream) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    match limit {
        Some(k) if k < len => {
            for i in 0..k {
                let j = i + rng.below_inclusive(len - 1 - i);
                idx.swap(i, j);
            }
            idx.truncate(k);
            idx.sort_unstable();
            idx
        }
        _ => idx,
    }
}

/// Compares `analytic` (one array per block of `store`) with central
/// differences of `loss`, block by block.
pub fn check_param_grads(
    store: &ParamStore,
    analytic: &[NdArray],
    mut loss: impl FnMut(&ParamStore) -> Result<Probe>,
    opts: &GradCheckOptions,
) -> Result<Vec<BlockCheck>> {
    let mut rng = RngStream::new(opts.seed, streams::GRAD_CHECK);
    let mut probe = store.clone();
    let base = loss(store)?.signature;
    let mut report = Vec::with_capacity(store.len());
    for (id, name, value) in store.iter() {
        let indices = probe_indices(value.len(), opts.max_entries_per_block, &mut rng);
        let mut numeric = Vec::with_capacity(indices.len());
        let mut narrowed = 0;
        for &i in &indices {
            let orig = value.data()[i];
            let (d, shrunk) = central_difference(
                |offset| {
                    probe.get_mut(id).data_mut()[i] = orig + offset;
                    loss(&probe)
                },
                base,
                opts.step,
            )?;
            probe.get_mut(id).data_mut()[i] = orig;
            numeric.push(d);
            narrowed += usize::from(shrunk);
        }
        let picked: Vec<f64> = indices
            .iter()
            .map(|&i| analytic[id.index()].data()[i])
            .collect();
        let rel = relative_error(&picked, &numeric, opts.floor);
        report.push(BlockCheck {
            name: name.to_owned(),
            checked: indices.len(),
            narrowed,
            max_abs_error: max_abs_diff(&picked, &numeric),
            max_rel_error: rel,
            flagged: rel.is_nan() || rel >= opts.tolerance,
        });
    }
    Ok(report)
}

/// Gradient check of a graph function with respect to each free input.
///
/// `f` builds a scalar from variables holding `inputs`; returns the worst
/// relative error over all inputs.
pub fn check_function<F>(inputs: &[NdArray], f: F, opts: &GradCheckOptions) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph, &[Tensor<'g>]) -> Result<Tensor<'g>>,
{
    let graph = Graph::new();
    let vars: Vec<Tensor<'_>> = inputs.iter().map(|a| graph.variable(a.clone())).collect();
    let out = f(&graph, &vars)?;
    let grads = graph.backward(out)?;
    let analytic: Vec<NdArray> = vars
        .iter()
        .zip(inputs)
        .map(|(v, a)| grads.wrt(*v).unwrap_or_else(|| NdArray::zeros(a.shape())))
        .collect();

    let base = graph.relu_signature();
    let eval = |values: &[NdArray]| -> Result<Probe> {
        let g = Graph::new();
        let vs: Vec<Tensor<'_>> = values.iter().map(|a| g.constant(a.clone())).collect();
        Ok(Probe::of(f(&g, &vs)?))
    };

    let mut worst: f64 = 0.0;
    let mut probe = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let mut numeric = Vec::with_capacity(input.len());
        for i in 0..input.len() {
            let orig = input.data()[i];
            let (d, _) = central_difference(
                |offset| {
                    probe[k].data_mut()[i] = orig + offset;
                    eval(&probe)
                },
                base,
                opts.step,
            )?;
            probe[k].data_mut()[i] = orig;
            numeric.push(d);
        }
        let err = relative_error(analytic[k].data(), &numeric, opts.floor);
        worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_bounds_the_denominator() {
        assert_eq!(relative_error(&[0.0], &[1e-9], 1e-6), 1e-9 / 1e-6);
        assert_eq!(relative_error(&[2.0], &[1.0], 1e-6), 0.5);
    }

    #[test]
    fn probes_are_distinct_and_bounded() {
        let mut rng = RngStream::new(1, streams::GRAD_CHECK);
        let idx = probe_indices(100, Some(10), &mut rng);
        assert_eq!(idx.len(), 10);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert!(idx.iter().all(|&i| i < 100));
        assert_eq!(probe_indices(5, Some(10), &mut rng), vec![0, 1, 2, 3, 4]);
    }
}
