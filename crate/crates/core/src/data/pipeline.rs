//! Temporal sampling, spatial cropping and depth normalisation.
//!
//! Every stage applies identical frame indices and identical crop windows to
//! an RGB frame and its depth map.

use std::fmt;
use std::str::FromStr;

use super::clip::ClipPair;
use super::image::Image;
use crate::error::{Error, Result};
use crate::model::ClipTensors;
use crate::rng::RngStream;
use crate::tensor::NdArray;

/// `k` indices spread evenly over `0..len`, first and last frame included,
/// rounded to nearest (halves round up). Repeats indices when `len < k`.
/// `k == 1` picks frame 0.
pub fn sample_indices(len: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::Parameter(
            "frames to sample must be at least 1".into(),
        ));
    }
    if len == 0 {
        return Err(Error::Data("cannot sample from an empty clip".into()));
    }
    if k == 1 {
        return Ok(vec![0]);
    }
    let span = len - 1;
    let steps = k - 1;
    Ok((0..k)
        .map(|i| (2 * i * span + steps) / (2 * steps))
        .collect())
}

pub fn sample_frames(clip: &ClipPair, k: usize) -> Result<ClipPair> {
    if clip.rgb.len() != clip.depth.len() {
        return Err(Error::Data(format!(
            "clip {}: {} rgb frames but {} depth frames",
            clip.id,
            clip.rgb.len(),
            clip.depth.len()
        )));
    }
    let idx = sample_indices(clip.len(), k)?;
    Ok(ClipPair {
        id: clip.id.clone(),
        label: clip.label,
        rgb: idx.iter().map(|&i| clip.rgb[i].clone()).collect(),
        depth: idx.iter().map(|&i| clip.depth[i].clone()).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CropMode {
    /// Independent window per frame.
    RandomPerFrame,
    /// One random window shared by every frame of the clip.
    SameRegion,
    Center,
}

impl CropMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CropMode::RandomPerFrame => "random_per_frame",
            CropMode::SameRegion => "same_region",
            CropMode::Center => "center",
        }
    }
}

impl FromStr for CropMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "random_per_frame" => Ok(CropMode::RandomPerFrame),
            "same_region" => Ok(CropMode::SameRegion),
            "center" => Ok(CropMode::Center),
            other => Err(Error::Config(format!("unknown crop mode {other:?}"))),
        }
    }
}

impl fmt::Display for CropMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropSpec {
    pub mode: CropMode,
    /// Shorter side after resizing.
    pub resize_side: usize,
    pub crop_side: usize,
}

impl Default for CropSpec {
    fn default() -> Self {
        Self {
            mode: CropMode::RandomPerFrame,
            resize_side: 64,
            crop_side: 56,
        }
    }
}

impl CropSpec {
    pub fn validate(&self) -> Result<()> {
        if self.crop_side == 0 || self.crop_side > self.resize_side {
            return Err(Error::Parameter(format!(
                "crop side {} must be in 1..={}",
                self.crop_side, self.resize_side
            )));
        }
        Ok(())
    }

    pub fn with_mode(self, mode: CropMode) -> Self {
        Self { mode, ..self }
    }
}

/// Resized extents for an `width × height` frame whose shorter side becomes
/// `side`.
fn resized_extent(width: usize, height: usize, side: usize) -> (usize, usize) {
    let scale = |long: usize, short: usize| -> usize {
        ((long as f64) * side as f64 / short as f64)
            .round()
            .max(1.0) as usize
    };
    if width <= height {
        (side, scale(height, width))
    } else {
        (scale(width, height), side)
    }
}

/// Top-left window offsets `(x, y)`, one per frame.
pub fn crop_offsets(
    frames: usize,
    width: usize,
    height: usize,
    spec: &CropSpec,
    rng: &mut RngStream,
) -> Result<Vec<(usize, usize)>> {
    spec.validate()?;
    if spec.crop_side > width || spec.crop_side > height {
        return Err(Error::Parameter(format!(
            "crop side {} exceeds resized frame {width}x{height}",
            spec.crop_side
        )));
    }
    let (max_x, max_y) = (width - spec.crop_side, height - spec.crop_side);
    let mut draw = || (rng.below_inclusive(max_x), rng.below_inclusive(max_y));
    Ok(match spec.mode {
        CropMode::Center => vec![(max_x / 2, max_y / 2); frames],
        CropMode::SameRegion => vec![draw(); frames],
        CropMode::RandomPerFrame => (0..frames).map(|_| draw()).collect(),
    })
}

/// Resizes every frame so its shorter side is `resize_side`, then cuts a
/// `crop_side²` window placed per `spec.mode`. Frame `i` of both streams
/// shares one window.
pub fn crop(clip: &ClipPair, spec: &CropSpec, rng: &mut RngStream) -> Result<ClipPair> {
    clip.validate()?;
    let (w, h) = resized_extent(clip.rgb[0].width(), clip.rgb[0].height(), spec.resize_side);
    let offsets = crop_offsets(clip.len(), w, h, spec, rng)?;
    let c = spec.crop_side;
    let cut = |img: &Image, (x, y): (usize, usize)| img.resized(w, h)?.window(x, y, c, c);
    let mut rgb = Vec::with_capacity(clip.len());
    let mut depth = Vec::with_capacity(clip.len());
    for ((r, d), &off) in clip.rgb.iter().zip(&clip.depth).zip(&offsets) {
        rgb.push(cut(r, off)?);
        depth.push(cut(d, off)?);
    }
    Ok(ClipPair {
        id: clip.id.clone(),
        label: clip.label,
        rgb,
        depth,
    })
}

/// Per-frame min-max normalisation to `[0, 1]` (constant frames map to 0),
/// replicated into three channels.
pub fn preprocess_depth(depth: &Image) -> Image {
    let (lo, hi) = depth
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    let mut data = Vec::with_capacity(depth.data().len() * 3);
    for (i, _) in depth.data().chunks(depth.channels()).enumerate() {
        let v = depth.data()[i * depth.channels()];
        let n = if range > 0.0 { (v - lo) / range } else { 0.0 };
        data.extend_from_slice(&[n, n, n]);
    }
    Image::new(depth.width(), depth.height(), 3, data).expect("same extents")
}

/// Stacks square 3-channel frames into a `[k, 3, S, S]` array.
fn stack(frames: &[Image]) -> Result<NdArray> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Data("no frames to stack".into()))?;
    let (w, h) = (first.width(), first.height());
    let mut data = Vec::with_capacity(frames.len() * 3 * w * h);
    for f in frames {
        if f.channels() != 3 || f.width() != w || f.height() != h {
            return Err(Error::Data("frames differ in extents or channels".into()));
        }
        data.extend(f.to_planar());
    }
    NdArray::new(vec![frames.len(), 3, h, w], data)
}

/// Full preprocessing: sample `k` frames, crop, normalise depth, stack.
pub fn prepare(
    clip: &ClipPair,
    k: usize,
    spec: &CropSpec,
    rng: &mut RngStream,
) -> Result<ClipTensors> {
    let sampled = sample_frames(clip, k)?;
    let cropped = crop(&sampled, spec, rng)?;
    let depth: Vec<Image> = cropped.depth.iter().map(preprocess_depth).collect();
    Ok(ClipTensors {
        rgb: stack(&cropped.rgb)?,
        depth: stack(&depth)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::streams;

    #[test]
    fn identity_sampling() {
        assert_eq!(sample_indices(32, 32).unwrap(), (0..32).collect::<Vec<_>>());
    }

    #[test]
    fn rounding_rule() {
        // i·(len-1)/(k-1): 0, 2, 4, 6
        assert_eq!(sample_indices(7, 4).unwrap(), vec![0, 2, 4, 6]);
        // 0, 1/3, 2/3, 1 rounded
        assert_eq!(sample_indices(2, 4).unwrap(), vec![0, 0, 1, 1]);
        // 0, 1.5, 3 with halves rounding up
        assert_eq!(sample_indices(4, 3).unwrap(), vec![0, 2, 3]);
        assert_eq!(sample_indices(9, 1).unwrap(), vec![0]);
    }

    #[test]
    fn zero_frames_is_a_parameter_error() {
        assert!(matches!(sample_indices(5, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn center_offset_is_arithmetic_center() {
        let spec = CropSpec {
            mode: CropMode::Center,
            resize_side: 64,
            crop_side: 56,
        };
        let mut rng = RngStream::new(0, streams::CROP);
        let offs = crop_offsets(3, 64, 64, &spec, &mut rng).unwrap();
        assert_eq!(offs, vec![(4, 4); 3]);
        assert_eq!(rng.position(), 0);
    }

    #[test]
    fn crop_larger_than_frame_fails() {
        let spec = CropSpec {
            mode: CropMode::Center,
            resize_side: 32,
            crop_side: 40,
        };
        let mut rng = RngStream::new(0, streams::CROP);
        assert!(matches!(
            crop_offsets(1, 32, 32, &spec, &mut rng),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn shorter_side_drives_resize() {
        assert_eq!(resized_extent(128, 96, 64), (85, 64));
        assert_eq!(resized_extent(64, 64, 64), (64, 64));
    }

    #[test]
    fn depth_normalisation() {
        let img = |v: Vec<f64>| Image::new(v.len(), 1, 1, v).unwrap();
        let out = preprocess_depth(&img(vec![0.0, 500.0, 1000.0]));
        assert_eq!(out.channels(), 3);
        assert_eq!(out.data(), &[0.0, 0.0, 0.0, 0.5, 0.5, 0.5, 1.0, 1.0, 1.0]);
        let ends = preprocess_depth(&img(vec![100.0, 300.0]));
        assert_eq!(ends.data(), &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let flat = preprocess_depth(&img(vec![7.0; 4]));
        assert!(flat.data().iter().all(|&v| v == 0.0));
    }
}
