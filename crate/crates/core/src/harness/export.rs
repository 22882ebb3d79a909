use std::path::{Path, PathBuf};

use super::train::load_checkpoint;
use crate::data::{prepare, read_clip};
use crate::error::Result;
use crate::model::export::write_attention_csvs;
use crate::model::AttentionMaps;
use crate::rng::{streams, RngStream};
use crate::tensor::{Graph, Mode};

/// Eval-mode attention maps of the clip in `clip_dir`, center-cropped as
/// in evaluation.
pub fn attention_maps(checkpoint: &Path, clip_dir: &Path) -> Result<AttentionMaps> {
    let (model, _, crop) = load_checkpoint(checkpoint)?;
    let clip = read_clip(clip_dir)?;
    let mut crop_rng = RngStream::new(0, streams::CROP);
    let input = prepare(&clip, model.config().frames, &crop, &mut crop_rng)?;
    let graph = Graph::new();
    let mut dropout = RngStream::new(0, streams::DROPOUT);
    Ok(model
        .forward(&graph, &input, Mode::Eval, &mut dropout)?
        .maps)
}

/// Writes every self- and mutual-attention map as CSV under `out`.
pub fn export_attention(checkpoint: &Path, clip_dir: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    write_attention_csvs(&attention_maps(checkpoint, clip_dir)?, out)
}
