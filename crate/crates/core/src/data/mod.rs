//! Clip storage, preprocessing and the synthetic RGB-D generator.

mod clip;
mod image;
mod manifest;
mod pipeline;
pub mod pnm;
pub mod synth;

pub use clip::{read_clip, write_clip, ClipPair};
pub use image::Image;
pub use manifest::{DatasetManifest, ManifestEntry};
pub use pipeline::{
    crop, crop_offsets, prepare, preprocess_depth, sample_frames, sample_indices, CropMode,
    CropSpec,
};
pub use synth::{generate_dataset, GenConfig};
