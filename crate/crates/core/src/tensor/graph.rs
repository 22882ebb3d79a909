//! Define-by-run reverse-mode differentiation.
//!
//! A [`Graph`] is an append-only tape of nodes. Every op pushes one node
//! whose parents already exist, so node ids are a topological order and the
//! backward pass is a single reverse sweep. A fresh graph is built for each
//! forward pass; parameters enter it as leaves copied from a [`ParamStore`].

use std::cell::{Cell, Ref, RefCell};
use std::fmt;

use super::ops::Op;
use super::{NdArray, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Train or eval behaviour for stochastic ops.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Op families, used for reporting and backward fault injection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    MatMul,
    Transpose,
    Add,
    Mul,
    Scale,
    AddRowBias,
    Relu,
    Softmax,
    LayerNorm,
    Dropout,
    CrossEntropy,
    NegLogAt,
    MeanRows,
    Sum,
    ConcatCols,
    Conv2d,
    SpatialMean,
}

pub(crate) struct Node {
    pub(crate) value: NdArray,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
    pub(crate) param: Option<ParamId>,
}

#[derive(Default)]
pub struct Graph {
    pub(crate) nodes: RefCell<Vec<Node>>,
    fault: Cell<Option<(OpKind, f64)>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Tensor<'g> {
    pub(crate) graph: &'g Graph,
    pub(crate) id: usize,
}

impl fmt::Debug for Tensor<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Input that takes no gradient.
    pub fn constant(&self, value: NdArray) -> Tensor<'_> {
        self.push(value, Op::Leaf, false, None)
    }

    /// Free leaf that takes a gradient; retrieve it with [`Gradients::wrt`].
    pub fn variable(&self, value: NdArray) -> Tensor<'_> {
        self.push(value, Op::Leaf, true, None)
    }

    /// Leaf bound to a parameter block; its gradient is reported per [`ParamId`].
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Tensor<'_> {
        self.push(store.get(id).clone(), Op::Leaf, true, Some(id))
    }

    /// Hash of which ReLU inputs are positive. Two evaluations with equal
    /// signatures lie on the same linear piece of every ReLU.
    pub fn relu_signature(&self) -> u64 {
        let nodes = self.nodes.borrow();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for node in nodes.iter() {
            if let Op::Relu(input) = node.op {
                for &v in nodes[input].value.data() {
                    h ^= u64::from(v > 0.0);
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }

    /// Multiplies the backward contribution of every `kind` node by `factor`.
    ///
    /// Exists so verification tooling can prove it catches a broken rule.
    #[doc(hidden)]
    pub fn inject_backward_fault(&self, kind: OpKind, factor: f64) {
        self.fault.set(Some((kind, factor)));
    }

    pub(crate) fn push(
        &self,
        value: NdArray,
        op: Op,
        requires_grad: bool,
        param: Option<ParamId>,
    ) -> Tensor<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        debug_assert!(op.parents().iter().all(|&p| p < id));
        nodes.push(Node {
            value,
            op,
            requires_grad,
            param,
        });
        Tensor { graph: self, id }
    }

    pub(crate) fn any_requires_grad(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Tensor<'_>) -> Result<Gradients> {
        if !std::ptr::eq(loss.graph, self) {
            return Err(Error::Contract("loss belongs to another graph".into()));
        }
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![1.0]);
        let fault = self.fault.get();
        for id in (0..=loss.id).rev() {
            let Some(mut g) = grads[id].take() else {
                continue;
            };
            let node = &nodes[id];
            if let Some((kind, factor)) = fault {
                if node.op.kind() == kind {
                    g.iter_mut().for_each(|x| *x *= factor);
                }
            }
            node.op.backward(&nodes, &node.value, &g, &mut grads);
            grads[id] = Some(g);
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        let params = nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|p| (i, p)))
            .collect();
        Ok(Gradients {
            grads,
            shapes,
            params,
        })
    }
}

impl<'g> Tensor<'g> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    /// Copy of the node's value.
    pub fn value(&self) -> NdArray {
        self.graph.nodes.borrow()[self.id].value.clone()
    }

    /// Borrow of the node's value. Adding nodes while the borrow lives panics.
    pub fn value_ref(&self) -> Ref<'g, NdArray> {
        Ref::map(self.graph.nodes.borrow(), |n| &n[self.id].value)
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        self.graph.nodes.borrow()[self.id].value.data()[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }

    pub fn kind(&self) -> OpKind {
        self.graph.nodes.borrow()[self.id].op.kind()
    }
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
    params: Vec<(usize, ParamId)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `t`; `None` when unreachable.
    pub fn wrt(&self, t: Tensor<'_>) -> Option<NdArray> {
        self.grads[t.id]
            .as_ref()
            .map(|g| NdArray::new(self.shapes[t.id].clone(), g.clone()).expect("shape recorded"))
    }

    /// Adds `scale ·` gradient of every parameter leaf into `acc`, indexed by
    /// [`ParamId`]. A parameter used by several leaves receives the sum.
    pub fn accumulate_params(&self, acc: &mut [NdArray], scale: f64) -> Result<()> {
        for &(node, pid) in &self.params {
            let Some(g) = &self.grads[node] else { continue };
            let len = acc.len();
            let slot = acc.get_mut(pid.0).ok_or(Error::Index {
                what: "parameter",
                index: pid.0,
                len,
            })?;
            if slot.len() != g.len() {
                return Err(Error::Dimension {
                    op: "accumulate_params",
                    lhs: slot.shape().to_vec(),
                    rhs: self.shapes[node].clone(),
                });
            }
            for (a, &b) in slot.data_mut().iter_mut().zip(g) {
                *a += scale * b;
            }
        }
        Ok(())
    }

    /// Per-parameter gradients for a store, zeros where a block was unused.
    pub fn param_grads(&self, store: &ParamStore) -> Result<Vec<NdArray>> {
        let mut acc = store.zeros_like();
        self.accumulate_params(&mut acc, 1.0)?;
        Ok(acc)
    }
}
