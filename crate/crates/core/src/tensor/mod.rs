//! Dense float64 tensors, reverse-mode differentiation, Adam and the
//! checkpoint container.

mod adam;
mod array;
pub mod checkpoint;
pub mod gradcheck;
mod graph;
pub mod kernels;
mod ops;
mod params;

pub use adam::{AdamConfig, AdamState};
pub use array::{argmax, NdArray};
pub use graph::{Gradients, Graph, Mode, OpKind, Tensor};
pub use params::{ParamId, ParamStore};
