//! Differentiable ops: forward constructors on [`Tensor`] and their
//! backward rules.

use super::graph::{Mode, Node, OpKind, Tensor};
use super::kernels::{self, ConvGeometry};
use super::NdArray;
use crate::error::{Error, Result};
use crate::rng::RngStream;

pub(crate) enum Op {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddRowBias(usize, usize),
    Relu(usize),
    Softmax {
        input: usize,
        axis: usize,
    },
    LayerNorm {
        input: usize,
        gamma: usize,
        beta: usize,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Dropout {
        input: usize,
        mask: Vec<f64>,
    },
    CrossEntropy {
        logits: usize,
        label: usize,
        probs: Vec<f64>,
    },
    NegLogAt {
        input: usize,
        index: usize,
    },
    MeanRows(usize),
    Sum(usize),
    ConcatCols(Vec<usize>),
    Conv2d {
        input: usize,
        weight: usize,
        bias: usize,
        geometry: ConvGeometry,
        cols: Vec<f64>,
    },
    SpatialMean(usize),
}

impl Op {
    pub(crate) fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Transpose(_) => OpKind::Transpose,
            Op::Add(..) => OpKind::Add,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::AddRowBias(..) => OpKind::AddRowBias,
            Op::Relu(_) => OpKind::Relu,
            Op::Softmax { .. } => OpKind::Softmax,
            Op::LayerNorm { .. } => OpKind::LayerNorm,
            Op::Dropout { .. } => OpKind::Dropout,
            Op::CrossEntropy { .. } => OpKind::CrossEntropy,
            Op::NegLogAt { .. } => OpKind::NegLogAt,
            Op::MeanRows(_) => OpKind::MeanRows,
            Op::Sum(_) => OpKind::Sum,
            Op::ConcatCols(_) => OpKind::ConcatCols,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::SpatialMean(_) => OpKind::SpatialMean,
        }
    }

    pub(crate) fn parents(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Mul(a, b) | Op::AddRowBias(a, b) => {
                vec![*a, *b]
            }
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::Relu(a)
            | Op::MeanRows(a)
            | Op::Sum(a)
            | Op::SpatialMean(a) => vec![*a],
            Op::Softmax { input, .. } | Op::Dropout { input, .. } | Op::NegLogAt { input, .. } => {
                vec![*input]
            }
            Op::CrossEntropy { logits, .. } => vec![*logits],
            Op::LayerNorm {
                input, gamma, beta, ..
            } => vec![*input, *gamma, *beta],
            Op::ConcatCols(parts) => parts.clone(),
            Op::Conv2d {
                input,
                weight,
                bias,
                ..
            } => vec![*input, *weight, *bias],
        }
    }

    /// Accumulates this node's contribution into its parents' gradients.
    pub(crate) fn backward(
        &self,
        nodes: &[Node],
        out: &NdArray,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let val = |i: usize| &nodes[i].value;
        match self {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, n) = val(*a).dims2().expect("checked in forward");
                let p = val(*b).shape()[1];
                if let Some(ga) = slot(nodes, grads, *a) {
                    kernels::matmul_nt_acc(g, val(*b).data(), ga, m, p, n);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    kernels::matmul_tn_acc(val(*a).data(), g, gb, m, n, p);
                }
            }
            Op::Transpose(a) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    let (r, c) = val(*a).dims2().expect("checked in forward");
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] += g[j * r + i];
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for p in [*a, *b] {
                    if let Some(gp) = slot(nodes, grads, p) {
                        add_into(gp, g);
                    }
                }
            }
            Op::Mul(a, b) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((d, &gi), &bi) in ga.iter_mut().zip(g).zip(val(*b).data()) {
                        *d += gi * bi;
                    }
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    for ((d, &gi), &ai) in gb.iter_mut().zip(g).zip(val(*a).data()) {
                        *d += gi * ai;
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    for (d, &gi) in ga.iter_mut().zip(g) {
                        *d += c * gi;
                    }
                }
            }
            Op::AddRowBias(x, b) => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    add_into(gx, g);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    let n = gb.len();
                    for row in g.chunks(n) {
                        add_into(gb, row);
                    }
                }
            }
            Op::Relu(a) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((d, &gi), &x) in ga.iter_mut().zip(g).zip(val(*a).data()) {
                        if x > 0.0 {
                            *d += gi;
                        }
                    }
                }
            }
            Op::Softmax { input, axis } => {
                if let Some(gi) = slot(nodes, grads, *input) {
                    let (outer, len, inner) = axis_split(out.shape(), *axis);
                    let y = out.data();
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |j: usize| (o * len + j) * inner + i;
                            let s: f64 = (0..len).map(|j| g[at(j)] * y[at(j)]).sum();
                            for j in 0..len {
                                gi[at(j)] += y[at(j)] * (g[at(j)] - s);
                            }
                        }
                    }
                }
            }
            Op::LayerNorm {
                input,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let d = val(*gamma).len();
                let gam = val(*gamma).data();
                if let Some(gx) = slot(nodes, grads, *input) {
                    for (r, inv) in inv_std.iter().enumerate() {
                        let range = r * d..(r + 1) * d;
                        let xh = &normalized[range.clone()];
                        let gr = &g[range.clone()];
                        let mut mean_dxh = 0.0;
                        let mut mean_dxh_xh = 0.0;
                        for j in 0..d {
                            let dxh = gr[j] * gam[j];
                            mean_dxh += dxh;
                            mean_dxh_xh += dxh * xh[j];
                        }
                        mean_dxh /= d as f64;
                        mean_dxh_xh /= d as f64;
                        let dst = &mut gx[range];
                        for j in 0..d {
                            let dxh = gr[j] * gam[j];
                            dst[j] += inv * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
                        }
                    }
                }
                if let Some(gg) = slot(nodes, grads, *gamma) {
                    for (row_g, row_xh) in g.chunks(d).zip(normalized.chunks(d)) {
                        for j in 0..d {
                            gg[j] += row_g[j] * row_xh[j];
                        }
                    }
                }
                if let Some(gb) = slot(nodes, grads, *beta) {
                    for row_g in g.chunks(d) {
                        add_into(gb, row_g);
                    }
                }
            }
            Op::Dropout { input, mask } => {
                if let Some(ga) = slot(nodes, grads, *input) {
                    for ((d, &gi), &m) in ga.iter_mut().zip(g).zip(mask) {
                        *d += gi * m;
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                label,
                probs,
            } => {
                if let Some(gl) = slot(nodes, grads, *logits) {
                    for (j, (d, &p)) in gl.iter_mut().zip(probs).enumerate() {
                        let onehot = if j == *label { 1.0 } else { 0.0 };
                        *d += g[0] * (p - onehot);
                    }
                }
            }
            Op::NegLogAt { input, index } => {
                if let Some(ga) = slot(nodes, grads, *input) {
                    ga[*index] -= g[0] / val(*input).data()[*index];
                }
            }
            Op::MeanRows(a) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    let n = g.len();
                    let m = ga.len() / n;
                    let w = 1.0 / m as f64;
                    for row in ga.chunks_mut(n) {
                        for (d, &gi) in row.iter_mut().zip(g) {
                            *d += w * gi;
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    ga.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::ConcatCols(parts) => {
                let rows = out.shape()[0];
                let total = out.shape()[1];
                let mut offset = 0;
                for &p in parts {
                    let width = val(p).shape()[1];
                    if let Some(gp) = slot(nodes, grads, p) {
                        for r in 0..rows {
                            let src = &g[r * total + offset..r * total + offset + width];
                            add_into(&mut gp[r * width..(r + 1) * width], src);
                        }
                    }
                    offset += width;
                }
            }
            Op::Conv2d {
                input,
                weight,
                bias,
                geometry,
                cols,
            } => {
                let frames = val(*input).shape()[0];
                let out_ch = val(*weight).shape()[0];
                let (crows, ccols) = (geometry.col_rows(), geometry.col_cols());
                let per_out = out_ch * ccols;
                if let Some(gw) = slot(nodes, grads, *weight) {
                    for f in 0..frames {
                        let gf = &g[f * per_out..(f + 1) * per_out];
                        let cf = &cols[f * crows * ccols..(f + 1) * crows * ccols];
                        kernels::matmul_nt_acc(gf, cf, gw, out_ch, ccols, crows);
                    }
                }
                if let Some(gb) = slot(nodes, grads, *bias) {
                    for f in 0..frames {
                        for (o, d) in gb.iter_mut().enumerate() {
                            let start = f * per_out + o * ccols;
                            *d += g[start..start + ccols].iter().sum::<f64>();
                        }
                    }
                }
                if let Some(gi) = slot(nodes, grads, *input) {
                    let per_in = geometry.channels * geometry.height * geometry.width;
                    let w = val(*weight).data();
                    let mut dcols = vec![0.0; crows * ccols];
                    for f in 0..frames {
                        dcols.iter_mut().for_each(|x| *x = 0.0);
                        let gf = &g[f * per_out..(f + 1) * per_out];
                        kernels::matmul_tn_acc(w, gf, &mut dcols, out_ch, crows, ccols);
                        kernels::col2im_acc(
                            &dcols,
                            geometry,
                            &mut gi[f * per_in..(f + 1) * per_in],
                        );
                    }
                }
            }
            Op::SpatialMean(a) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    let plane = ga.len() / g.len();
                    let w = 1.0 / plane as f64;
                    for (chunk, &gi) in ga.chunks_mut(plane).zip(g) {
                        chunk.iter_mut().for_each(|d| *d += w * gi);
                    }
                }
            }
        }
    }
}

fn slot<'a>(
    nodes: &[Node],
    grads: &'a mut [Option<Vec<f64>>],
    id: usize,
) -> Option<&'a mut Vec<f64>> {
    if !nodes[id].requires_grad {
        return None;
    }
    Some(grads[id].get_or_insert_with(|| vec![0.0; nodes[id].value.len()]))
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// `(outer, len, inner)` extents around `axis`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn dim_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Dimension {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

impl<'g> Tensor<'g> {
    fn unary(&self, value: NdArray, op: Op) -> Tensor<'g> {
        let rg = self.requires_grad();
        self.graph.push(value, op, rg, None)
    }

    fn with_parents(&self, parents: &[usize], value: NdArray, op: Op) -> Tensor<'g> {
        let rg = self.graph.any_requires_grad(parents);
        self.graph.push(value, op, rg, None)
    }

    /// Matrix product of rank-2 tensors.
    pub fn matmul(&self, rhs: &Tensor<'g>) -> Result<Tensor<'g>> {
        let value = {
            let a = self.value_ref();
            let b = rhs.value_ref();
            let ((m, n), (n2, p)) = match (a.dims2(), b.dims2()) {
                (Ok(x), Ok(y)) if x.1 == y.0 => (x, y),
                _ => return Err(dim_err("matmul", a.shape(), b.shape())),
            };
            debug_assert_eq!(n, n2);
            let mut out = vec![0.0; m * p];
            kernels::matmul_acc(a.data(), b.data(), &mut out, m, n, p);
            NdArray::new(vec![m, p], out)?
        };
        Ok(self.with_parents(&[self.id, rhs.id], value, Op::MatMul(self.id, rhs.id)))
    }

    pub fn transpose(&self) -> Result<Tensor<'g>> {
        let value = {
            let a = self.value_ref();
            let (r, c) = a.dims2()?;
            let mut out = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    out[j * r + i] = a.data()[i * c + j];
                }
            }
            NdArray::new(vec![c, r], out)?
        };
        Ok(self.unary(value, Op::Transpose(self.id)))
    }

    fn zip_same_shape(
        &self,
        rhs: &Tensor<'g>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<NdArray> {
        let a = self.value_ref();
        let b = rhs.value_ref();
        if a.shape() != b.shape() {
            return Err(dim_err(name, a.shape(), b.shape()));
        }
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        NdArray::new(a.shape().to_vec(), data)
    }

    /// Elementwise sum of equal shapes.
    pub fn add(&self, rhs: &Tensor<'g>) -> Result<Tensor<'g>> {
        let value = self.zip_same_shape(rhs, "add", |x, y| x + y)?;
        Ok(self.with_parents(&[self.id, rhs.id], value, Op::Add(self.id, rhs.id)))
    }

    /// Elementwise product of equal shapes.
    pub fn mul(&self, rhs: &Tensor<'g>) -> Result<Tensor<'g>> {
        let value = self.zip_same_shape(rhs, "mul", |x, y| x * y)?;
        Ok(self.with_parents(&[self.id, rhs.id], value, Op::Mul(self.id, rhs.id)))
    }

    pub fn scale(&self, factor: f64) -> Tensor<'g> {
        let value = self.value_ref().map(|x| x * factor);
        self.unary(value, Op::Scale(self.id, factor))
    }

    /// Adds a `[n]` bias to every length-`n` row along the last axis.
    pub fn add_row_bias(&self, bias: &Tensor<'g>) -> Result<Tensor<'g>> {
        let value = {
            let x = self.value_ref();
            let b = bias.value_ref();
            let n = *x.shape().last().unwrap_or(&0);
            if b.rank() != 1 || b.len() != n {
                return Err(dim_err("add_row_bias", x.shape(), b.shape()));
            }
            let mut out = x.data().to_vec();
            for row in out.chunks_mut(n) {
                add_into(row, b.data());
            }
            NdArray::new(x.shape().to_vec(), out)?
        };
        Ok(self.with_parents(&[self.id, bias.id], value, Op::AddRowBias(self.id, bias.id)))
    }

    pub fn relu(&self) -> Tensor<'g> {
        let value = self.value_ref().map(|x| if x < 0.0 { 0.0 } else { x });
        self.unary(value, Op::Relu(self.id))
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<'g>> {
        let value = {
            let x = self.value_ref();
            if axis >= x.rank() {
                return Err(Error::Parameter(format!(
                    "softmax axis {axis} on rank-{} tensor",
                    x.rank()
                )));
            }
            let (outer, len, inner) = axis_split(x.shape(), axis);
            let src = x.data();
            let mut out = vec![0.0; src.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |j: usize| (o * len + j) * inner + i;
                    let max = (0..len)
                        .map(|j| src[at(j)])
                        .fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for j in 0..len {
                        let e = (src[at(j)] - max).exp();
                        out[at(j)] = e;
                        total += e;
                    }
                    for j in 0..len {
                        out[at(j)] /= total;
                    }
                }
            }
            NdArray::new(x.shape().to_vec(), out)?
        };
        Ok(self.unary(
            value,
            Op::Softmax {
                input: self.id,
                axis,
            },
        ))
    }

    /// Layer normalization over the last axis with population variance.
    ///
    /// A zero-variance vector with `eps == 0` normalizes to zero.
    pub fn layer_norm(
        &self,
        gamma: &Tensor<'g>,
        beta: &Tensor<'g>,
        eps: f64,
    ) -> Result<Tensor<'g>> {
        let (value, normalized, inv_std) = {
            let x = self.value_ref();
            let gm = gamma.value_ref();
            let bt = beta.value_ref();
            let d = *x.shape().last().unwrap_or(&0);
            if gm.shape() != [d] || bt.shape() != [d] {
                return Err(dim_err("layer_norm", x.shape(), gm.shape()));
            }
            let rows = x.len() / d;
            let mut normalized = vec![0.0; x.len()];
            let mut out = vec![0.0; x.len()];
            let mut inv_std = Vec::with_capacity(rows);
            for r in 0..rows {
                let row = &x.data()[r * d..(r + 1) * d];
                let mean = row.iter().sum::<f64>() / d as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                let denom = var + eps;
                let inv = if denom > 0.0 { 1.0 / denom.sqrt() } else { 0.0 };
                inv_std.push(inv);
                for j in 0..d {
                    let xh = (row[j] - mean) * inv;
                    normalized[r * d + j] = xh;
                    out[r * d + j] = gm.data()[j] * xh + bt.data()[j];
                }
            }
            (NdArray::new(x.shape().to_vec(), out)?, normalized, inv_std)
        };
        Ok(self.with_parents(
            &[self.id, gamma.id, beta.id],
            value,
            Op::LayerNorm {
                input: self.id,
                gamma: gamma.id,
                beta: beta.id,
                normalized,
                inv_std,
            },
        ))
    }

    /// Inverted dropout. Eval mode and `p == 0` return `self` unchanged and
    /// draw nothing from `rng`.
    pub fn dropout(&self, p: f64, mode: Mode, rng: &mut RngStream) -> Result<Tensor<'g>> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Parameter(format!("dropout rate {p} not in [0, 1)")));
        }
        if mode == Mode::Eval || p == 0.0 {
            return Ok(*self);
        }
        let keep = 1.0 / (1.0 - p);
        let (value, mask) = {
            let x = self.value_ref();
            let mask: Vec<f64> = (0..x.len())
                .map(|_| if rng.next_f64() < p { 0.0 } else { keep })
                .collect();
            let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
            (NdArray::new(x.shape().to_vec(), data)?, mask)
        };
        Ok(self.unary(
            value,
            Op::Dropout {
                input: self.id,
                mask,
            },
        ))
    }

    /// `-log softmax(self)[label]` for a rank-1 logit vector.
    pub fn cross_entropy(&self, label: usize) -> Result<Tensor<'g>> {
        let (loss, probs) = {
            let x = self.value_ref();
            if x.rank() != 1 {
                return Err(dim_err("cross_entropy", x.shape(), &[x.len()]));
            }
            if label >= x.len() {
                return Err(Error::Index {
                    what: "label",
                    index: label,
                    len: x.len(),
                });
            }
            let max = x.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = x.data().iter().map(|v| (v - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            let loss = total.ln() + max - x.data()[label];
            (loss, exps.iter().map(|e| e / total).collect::<Vec<_>>())
        };
        Ok(self.unary(
            NdArray::scalar(loss),
            Op::CrossEntropy {
                logits: self.id,
                label,
                probs,
            },
        ))
    }

    /// `-ln self[index]` for a rank-1 tensor of probabilities.
    pub fn neg_log_at(&self, index: usize) -> Result<Tensor<'g>> {
        let v = {
            let x = self.value_ref();
            if x.rank() != 1 {
                return Err(dim_err("neg_log_at", x.shape(), &[x.len()]));
            }
            *x.data().get(index).ok_or(Error::Index {
                what: "class",
                index,
                len: x.len(),
            })?
        };
        Ok(self.unary(
            NdArray::scalar(-v.ln()),
            Op::NegLogAt {
                input: self.id,
                index,
            },
        ))
    }

    /// Mean over the rows of an `m×n` tensor, giving `[n]`.
    pub fn mean_rows(&self) -> Result<Tensor<'g>> {
        let value = {
            let x = self.value_ref();
            let (m, n) = x.dims2()?;
            let mut out = vec![0.0; n];
            for row in x.rows() {
                add_into(&mut out, row);
            }
            out.iter_mut().for_each(|v| *v /= m as f64);
            NdArray::vector(out)
        };
        Ok(self.unary(value, Op::MeanRows(self.id)))
    }

    pub fn sum(&self) -> Tensor<'g> {
        let total = self.value_ref().data().iter().sum();
        self.unary(NdArray::scalar(total), Op::Sum(self.id))
    }

    /// Joins rank-2 tensors with equal row counts side by side.
    pub fn concat_cols(parts: &[Tensor<'g>]) -> Result<Tensor<'g>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Parameter("concat_cols of nothing".into()))?;
        let value = {
            let vals: Vec<_> = parts.iter().map(|t| t.value_ref()).collect();
            let rows = vals[0].dims2()?.0;
            let mut widths = Vec::with_capacity(vals.len());
            for v in &vals {
                match v.dims2() {
                    Ok((r, c)) if r == rows => widths.push(c),
                    _ => return Err(dim_err("concat_cols", vals[0].shape(), v.shape())),
                }
            }
            let total: usize = widths.iter().sum();
            let mut out = Vec::with_capacity(rows * total);
            for r in 0..rows {
                for v in &vals {
                    out.extend_from_slice(v.row(r));
                }
            }
            NdArray::new(vec![rows, total], out)?
        };
        let ids: Vec<usize> = parts.iter().map(|t| t.id).collect();
        Ok(first.with_parents(&ids, value, Op::ConcatCols(ids.clone())))
    }

    /// Square-kernel convolution of `[N, C, H, W]` by `[O, C, K, K]` plus `[O]`.
    pub fn conv2d(
        &self,
        weight: &Tensor<'g>,
        bias: &Tensor<'g>,
        stride: usize,
        pad: usize,
    ) -> Result<Tensor<'g>> {
        let (value, geometry, cols) = {
            let x = self.value_ref();
            let w = weight.value_ref();
            let b = bias.value_ref();
            let (&[n, c, h, wd], &[o, wc, kh, kw]) = (x.shape(), w.shape()) else {
                return Err(dim_err("conv2d", x.shape(), w.shape()));
            };
            if wc != c || kh != kw || b.shape() != [o] || stride == 0 {
                return Err(dim_err("conv2d", x.shape(), w.shape()));
            }
            if h + 2 * pad < kh || wd + 2 * pad < kw {
                return Err(dim_err("conv2d", x.shape(), w.shape()));
            }
            let geometry = ConvGeometry {
                channels: c,
                height: h,
                width: wd,
                kernel: kh,
                stride,
                pad,
            };
            let (crows, ccols) = (geometry.col_rows(), geometry.col_cols());
            let per_in = c * h * wd;
            let mut cols = vec![0.0; n * crows * ccols];
            let mut out = vec![0.0; n * o * ccols];
            for f in 0..n {
                let cf = &mut cols[f * crows * ccols..(f + 1) * crows * ccols];
                kernels::im2col(&x.data()[f * per_in..(f + 1) * per_in], &geometry, cf);
                let of = &mut out[f * o * ccols..(f + 1) * o * ccols];
                for (oc, plane) in of.chunks_mut(ccols).enumerate() {
                    plane.iter_mut().for_each(|v| *v = b.data()[oc]);
                }
                kernels::matmul_acc(w.data(), cf, of, o, crows, ccols);
            }
            let shape = vec![n, o, geometry.out_height(), geometry.out_width()];
            (NdArray::new(shape, out)?, geometry, cols)
        };
        Ok(self.with_parents(
            &[self.id, weight.id, bias.id],
            value,
            Op::Conv2d {
                input: self.id,
                weight: weight.id,
                bias: bias.id,
                geometry,
                cols,
            },
        ))
    }

    /// Global average pooling of `[N, C, H, W]` to `[N, C]`.
    pub fn spatial_mean(&self) -> Result<Tensor<'g>> {
        let value = {
            let x = self.value_ref();
            let &[n, c, h, w] = x.shape() else {
                return Err(dim_err("spatial_mean", x.shape(), &[0, 0, 0, 0]));
            };
            let plane = h * w;
            let out = x
                .data()
                .chunks(plane)
                .map(|p| p.iter().sum::<f64>() / plane as f64)
                .collect();
            NdArray::new(vec![n, c], out)?
        };
        Ok(self.unary(value, Op::SpatialMean(self.id)))
    }
}
