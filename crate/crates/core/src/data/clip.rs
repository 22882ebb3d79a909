//! Clip directories.
//!
//! ```text
//! clip_<id>/manifest.txt      id=, label=, num_frames=, width=, height=
//! clip_<id>/rgb_0000.ppm      P6, maxval 255
//! clip_<id>/depth_0000.pgm    P5, maxval 65535
//! ```

use std::fs;
use std::path::Path;

use super::image::Image;
use super::pnm::PnmImage;
use crate::error::{Error, Result};

/// Aligned RGB and depth frame sequences with a class label.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipPair {
    pub id: String,
    pub label: usize,
    /// 3-channel frames in `[0, 1]`.
    pub rgb: Vec<Image>,
    /// 1-channel raw depth maps.
    pub depth: Vec<Image>,
}

impl ClipPair {
    pub fn len(&self) -> usize {
        self.rgb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rgb.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rgb.is_empty() {
            return Err(Error::Data(format!("clip {} has no frames", self.id)));
        }
        if self.rgb.len() != self.depth.len() {
            return Err(Error::Data(format!(
                "clip {}: {} rgb frames but {} depth frames",
                self.id,
                self.rgb.len(),
                self.depth.len()
            )));
        }
        let (w, h) = (self.rgb[0].width(), self.rgb[0].height());
        for (i, (r, d)) in self.rgb.iter().zip(&self.depth).enumerate() {
            if r.channels() != 3 || d.channels() != 1 {
                return Err(Error::Data(format!(
                    "clip {} frame {i}: expected 3 rgb and 1 depth channel",
                    self.id
                )));
            }
            if (r.width(), r.height()) != (w, h) || (d.width(), d.height()) != (w, h) {
                return Err(Error::Data(format!(
                    "clip {} frame {i}: extents differ from {w}x{h}",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

fn to_pnm(img: &Image, maxval: u16) -> PnmImage {
    let scale = if maxval == 255 { 255.0 } else { 1.0 };
    PnmImage {
        width: img.width(),
        height: img.height(),
        channels: img.channels(),
        maxval,
        samples: img
            .data()
            .iter()
            .map(|&v| (v * scale).round().clamp(0.0, f64::from(maxval)) as u16)
            .collect(),
    }
}

fn from_pnm(p: PnmImage, rgb: bool) -> Result<Image> {
    let max = if rgb { f64::from(p.maxval) } else { 1.0 };
    Image::new(
        p.width,
        p.height,
        p.channels,
        p.samples.iter().map(|&s| f64::from(s) / max).collect(),
    )
}

/// Writes `clip` into `dir`, quantizing RGB to 8 bits and depth to 16 bits.
pub fn write_clip(clip: &ClipPair, dir: &Path) -> Result<()> {
    clip.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = format!(
        "id={}\nlabel={}\nnum_frames={}\nwidth={}\nheight={}\n",
        clip.id,
        clip.label,
        clip.len(),
        clip.rgb[0].width(),
        clip.rgb[0].height()
    );
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    for (i, (r, d)) in clip.rgb.iter().zip(&clip.depth).enumerate() {
        to_pnm(r, 255).write(&dir.join(format!("rgb_{i:04}.ppm")))?;
        to_pnm(d, 65535).write(&dir.join(format!("depth_{i:04}.pgm")))?;
    }
    Ok(())
}

struct ClipHeader {
    id: String,
    label: usize,
    num_frames: usize,
    width: usize,
    height: usize,
}

fn parse_header(text: &str) -> Result<ClipHeader> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::format("manifest", format!("line {}: expected key=value", n + 1))
        })?;
        pairs.push((k.trim().to_owned(), v.trim().to_owned()));
    }
    let get = |key: &str| -> Result<&str> {
        pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::format(key, "missing from clip manifest"))
    };
    let number = |key: &str| -> Result<usize> {
        let v = get(key)?;
        v.parse()
            .map_err(|_| Error::format(key, format!("not a non-negative integer: {v:?}")))
    };
    Ok(ClipHeader {
        id: get("id")?.to_owned(),
        label: number("label")?,
        num_frames: number("num_frames")?,
        width: number("width")?,
        height: number("height")?,
    })
}

fn count_frames(dir: &Path, prefix: &str, ext: &str) -> Result<usize> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut n = 0;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if name.starts_with(prefix) && name.ends_with(ext) {
            n += 1;
        }
    }
    Ok(n)
}

pub fn read_clip(dir: &Path) -> Result<ClipPair> {
    let path = dir.join("manifest.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let header = parse_header(&text)?;
    if header.num_frames == 0 {
        return Err(Error::format(
            "num_frames",
            "clip must have at least one frame",
        ));
    }
    let rgb_files = count_frames(dir, "rgb_", ".ppm")?;
    let depth_files = count_frames(dir, "depth_", ".pgm")?;
    for (field, found) in [("rgb frames", rgb_files), ("depth frames", depth_files)] {
        if found != header.num_frames {
            return Err(Error::format(
                field,
                format!(
                    "manifest says {} but found {found} files",
                    header.num_frames
                ),
            ));
        }
    }
    let mut rgb = Vec::with_capacity(header.num_frames);
    let mut depth = Vec::with_capacity(header.num_frames);
    for i in 0..header.num_frames {
        let r = PnmImage::read(&dir.join(format!("rgb_{i:04}.ppm")))?;
        let d = PnmImage::read(&dir.join(format!("depth_{i:04}.pgm")))?;
        for (field, img, channels) in [("rgb", &r, 3), ("depth", &d, 1)] {
            if (img.width, img.height) != (header.width, header.height) {
                return Err(Error::format(
                    format!("{field} frame {i}"),
                    format!(
                        "{}x{} differs from manifest {}x{}",
                        img.width, img.height, header.width, header.height
                    ),
                ));
            }
            if img.channels != channels {
                return Err(Error::format(
                    format!("{field} frame {i}"),
                    "wrong PNM type",
                ));
            }
        }
        rgb.push(from_pnm(r, true)?);
        depth.push(from_pnm(d, false)?);
    }
    Ok(ClipPair {
        id: header.id,
        label: header.label,
        rgb,
        depth,
    })
}
