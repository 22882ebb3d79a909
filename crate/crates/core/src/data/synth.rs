//! Synthetic RGB-D clips whose label is only recoverable from both streams.
//!
//! Class `t·M + m` shows a striped square of texture `t` sliding across a
//! wall. The RGB rendering never looks at `m`; the depth rendering never
//! looks at `t`. In depth the square approaches or recedes from the camera
//! at a rate set by `m`, so RGB alone separates textures, depth alone
//! separates motion patterns, and only the pair identifies the class.

use std::path::Path;

use super::clip::{write_clip, ClipPair};
use super::image::Image;
use super::manifest::{DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::rng::{streams, RngStream};

const WALL_RGB: f64 = 0.55;
const FLOOR_RGB: f64 = 0.3;
const RGB_NOISE: f64 = 0.05;
const WALL_DEPTH: f64 = 4000.0;
const FLOOR_DEPTH: f64 = 500.0;
const SQUARE_START: f64 = 2250.0;
const SQUARE_TRAVEL: f64 = 1500.0;
const DEPTH_NOISE: f64 = 10.0;
const STRIPE: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    /// Texture identities.
    pub textures: usize,
    /// Depth-motion patterns.
    pub motions: usize,
    pub clips_per_class: usize,
    pub frames: usize,
    pub side: usize,
    pub seed: u64,
    /// Clips per class placed in the test split; `None` means a third.
    pub test_per_class: Option<usize>,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            textures: 2,
            motions: 2,
            clips_per_class: 10,
            frames: 8,
            side: 64,
            seed: 0,
            test_per_class: None,
        }
    }
}

impl GenConfig {
    pub fn num_classes(&self) -> usize {
        self.textures * self.motions
    }

    pub fn test_per_class(&self) -> usize {
        self.test_per_class.unwrap_or(self.clips_per_class / 3)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("textures", self.textures),
            ("motions", self.motions),
            ("clips per class", self.clips_per_class),
            ("frames", self.frames),
        ];
        for (what, n) in positive {
            if n == 0 {
                return Err(Error::Parameter(format!("{what} must be at least 1")));
            }
        }
        if self.side < 16 {
            return Err(Error::Parameter(format!(
                "image side {} is below 16",
                self.side
            )));
        }
        if self.test_per_class() > self.clips_per_class {
            return Err(Error::Parameter(format!(
                "{} test clips per class but only {} clips",
                self.test_per_class(),
                self.clips_per_class
            )));
        }
        Ok(())
    }

    pub fn label(&self, texture: usize, motion: usize) -> usize {
        texture * self.motions + motion
    }

    /// `(texture, motion)` of a label.
    pub fn factors(&self, label: usize) -> (usize, usize) {
        (label / self.motions, label % self.motions)
    }

    fn square_side(&self) -> usize {
        self.side / 3
    }

    fn floor_rows(&self) -> usize {
        self.side / 6
    }
}

/// Label-independent per-clip randomness: the square's path and the seed of
/// its pixel noise.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipDraws {
    pub start: (f64, f64),
    pub end: (f64, f64),
    pub noise_seed: u64,
}

impl ClipDraws {
    pub fn draw(cfg: &GenConfig, rng: &mut RngStream) -> Self {
        let max_x = (cfg.side - cfg.square_side()) as f64;
        let max_y = (cfg.side - cfg.floor_rows() - cfg.square_side()) as f64;
        let mut point = || (rng.uniform(0.0, max_x), rng.uniform(0.0, max_y));
        let start = point();
        let end = point();
        Self {
            start,
            end,
            noise_seed: rng.next_u64(),
        }
    }

    fn position(&self, frame: usize, frames: usize) -> (usize, usize) {
        let a = progress(frame, frames);
        let lerp = |p: f64, q: f64| (p + (q - p) * a).round() as usize;
        (
            lerp(self.start.0, self.end.0),
            lerp(self.start.1, self.end.1),
        )
    }
}

/// Depth change over the clip: from full approach (`m = 0`) to full
/// retreat (`m = M - 1`).
fn motion_amplitude(motion: usize, motions: usize) -> f64 {
    if motions > 1 {
        SQUARE_TRAVEL * (2.0 * motion as f64 / (motions - 1) as f64 - 1.0)
    } else {
        0.0
    }
}

fn progress(frame: usize, frames: usize) -> f64 {
    if frames > 1 {
        frame as f64 / (frames - 1) as f64
    } else {
        0.0
    }
}

/// Fully saturated colour of hue `h ∈ [0, 1)`.
fn hue(h: f64) -> [f64; 3] {
    let sector = h.rem_euclid(1.0) * 6.0;
    let x = 1.0 - (sector % 2.0 - 1.0).abs();
    match sector as usize {
        0 => [1.0, x, 0.0],
        1 => [x, 1.0, 0.0],
        2 => [0.0, 1.0, x],
        3 => [0.0, x, 1.0],
        4 => [x, 0.0, 1.0],
        _ => [1.0, 0.0, x],
    }
}

fn texture_colour(cfg: &GenConfig, texture: usize, x: usize, y: usize) -> [f64; 3] {
    let base = hue(texture as f64 / cfg.textures as f64);
    let along = if texture.is_multiple_of(2) { y } else { x };
    let shade = if (along / STRIPE).is_multiple_of(2) {
        1.0
    } else {
        0.5
    };
    base.map(|c| c * shade)
}

fn inside(px: usize, py: usize, (sx, sy): (usize, usize), side: usize) -> bool {
    px >= sx && px < sx + side && py >= sy && py < sy + side
}

/// Renders one clip. RGB depends on `(texture, draws)` only and depth on
/// `(motion, draws)` only.
pub fn render_clip(
    cfg: &GenConfig,
    texture: usize,
    motion: usize,
    draws: &ClipDraws,
) -> (Vec<Image>, Vec<Image>) {
    let s = cfg.side;
    let sq = cfg.square_side();
    let floor_top = s - cfg.floor_rows();
    let mut rgb_noise = RngStream::indexed(draws.noise_seed, streams::DATA_GEN, 0);
    let mut depth_noise = RngStream::indexed(draws.noise_seed, streams::DATA_GEN, 1);
    let amplitude = motion_amplitude(motion, cfg.motions);
    let mut rgb = Vec::with_capacity(cfg.frames);
    let mut depth = Vec::with_capacity(cfg.frames);
    for f in 0..cfg.frames {
        let at = draws.position(f, cfg.frames);
        let square_depth = SQUARE_START + amplitude * progress(f, cfg.frames);
        let mut r = Image::filled(s, s, 3, 0.0);
        let mut d = Image::filled(s, s, 1, 0.0);
        for y in 0..s {
            for x in 0..s {
                let (colour, z) = if inside(x, y, at, sq) {
                    (
                        texture_colour(cfg, texture, x - at.0, y - at.1),
                        square_depth,
                    )
                } else if y >= floor_top {
                    ([FLOOR_RGB; 3], FLOOR_DEPTH)
                } else {
                    ([WALL_RGB; 3], WALL_DEPTH)
                };
                for (c, v) in colour.iter().enumerate() {
                    let n = rgb_noise.uniform(-RGB_NOISE, RGB_NOISE);
                    r.set(x, y, c, (v + n).clamp(0.0, 1.0));
                }
                let n = depth_noise.uniform(-DEPTH_NOISE, DEPTH_NOISE);
                d.set(x, y, 0, (z + n).round());
            }
        }
        rgb.push(r);
        depth.push(d);
    }
    (rgb, depth)
}

/// A generated clip and its split.
#[derive(Clone, Debug)]
pub struct GeneratedClip {
    pub clip: ClipPair,
    pub split: &'static str,
}

/// Every clip in class-major order; the last `test_per_class` clips of
/// each class form the test split.
pub fn generate(cfg: &GenConfig) -> Result<Vec<GeneratedClip>> {
    cfg.validate()?;
    let n = cfg.clips_per_class;
    let train = n - cfg.test_per_class();
    let mut out = Vec::with_capacity(cfg.num_classes() * n);
    for label in 0..cfg.num_classes() {
        let (t, m) = cfg.factors(label);
        for i in 0..n {
            let index = (label * n + i) as u64;
            let mut rng = RngStream::indexed(cfg.seed, streams::DATA_GEN, index);
            let draws = ClipDraws::draw(cfg, &mut rng);
            let (rgb, depth) = render_clip(cfg, t, m, &draws);
            out.push(GeneratedClip {
                clip: ClipPair {
                    id: format!("{label}_{i:03}"),
                    label,
                    rgb,
                    depth,
                },
                split: if i < train { "train" } else { "test" },
            });
        }
    }
    Ok(out)
}

/// Writes every clip under `out` plus `out/manifest.tsv`.
pub fn generate_dataset(cfg: &GenConfig, out: &Path) -> Result<DatasetManifest> {
    let clips = generate(cfg)?;
    let mut entries = Vec::with_capacity(clips.len());
    for g in &clips {
        let rel = format!("clip_{}", g.clip.id);
        write_clip(&g.clip, &out.join(&rel))?;
        entries.push(ManifestEntry {
            path: rel.into(),
            label: g.clip.label,
            split: g.split.to_owned(),
        });
    }
    let manifest = DatasetManifest {
        root: out.to_path_buf(),
        declared_classes: Some(cfg.num_classes()),
        class_names: (0..cfg.num_classes())
            .map(|l| {
                let (t, m) = cfg.factors(l);
                format!("texture{t}-motion{m}")
            })
            .collect(),
        entries,
    };
    manifest.write(&out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

pub const MANIFEST_FILE: &str = "manifest.tsv";
