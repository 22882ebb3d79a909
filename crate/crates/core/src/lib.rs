//! RGB-D egocentric action recognition with per-modality inter-frame
//! transformer encoders and a mutual-attention fusion block.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: float64 arrays, a define-by-run autodiff graph, Adam and the
//!   checkpoint container.
//! * [`model`]: positional encoding, backbone, attention, encoder, mutual
//!   attention, fusion and the classifier head.
//! * [`data`]: clip storage, frame sampling, cropping, depth normalisation and
//!   the synthetic RGB-D generator.
//! * [`harness`]: configuration files, training, evaluation, gradient checks,
//!   attention export and the ablation grid.

pub mod data;
pub mod error;
pub mod harness;
pub mod model;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use model::{Architecture, ClipAggregation, FusionMode, ModelConfig, Trear};
pub use rng::RngStream;
pub use tensor::{Graph, Mode, NdArray, ParamId, ParamStore, Tensor};
