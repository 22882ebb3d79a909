//! The two-stream model: backbone, inter-frame encoder, mutual attention,
//! fusion and frame-averaged classification.

pub mod attention;
pub mod backbone;
mod config;
pub mod encoder;
pub mod export;
pub mod fusion;
pub mod layers;
pub mod positional;
mod trear;

pub use attention::multi_head_attention;
pub use backbone::{embed_frames, TinyBackbone};
pub use config::{Architecture, ClipAggregation, FusionMode, ModelConfig};
pub use encoder::encoder_forward;
pub use fusion::{classify, fuse, mutual_attention};
pub use positional::{positional_encoding, PositionalEncodingTable};
pub use trear::{AttentionMaps, ClipTensors, ForwardOutput, Stream, StreamActivations, Trear};
