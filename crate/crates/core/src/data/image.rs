use crate::error::{Error, Result};

/// Interleaved (`H × W × C`) float image.
///
/// RGB frames hold three channels in `[0, 1]`; raw depth maps hold one
/// channel in sensor units (`0..=65535`).
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::Data(format!(
                "image extents must be positive, got {width}x{height}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::Data(format!(
                "{width}x{height}x{channels} image given {} samples",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Pixel window with top-left corner `(x, y)`.
    pub fn window(&self, x: usize, y: usize, width: usize, height: usize) -> Result<Self> {
        if x + width > self.width || y + height > self.height {
            return Err(Error::Parameter(format!(
                "window {width}x{height} at ({x}, {y}) exceeds {}x{} image",
                self.width, self.height
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(width * height * c);
        for row in y..y + height {
            let start = (row * self.width + x) * c;
            data.extend_from_slice(&self.data[start..start + width * c]);
        }
        Self::new(width, height, c, data)
    }

    /// Left-right mirror.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..self.channels {
                    out.set(self.width - 1 - x, y, c, self.get(x, y, c));
                }
            }
        }
        out
    }

    /// Bilinear resample with half-pixel centres; same-size resizing is the
    /// identity.
    pub fn resized(&self, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parameter("resize target must be positive".into()));
        }
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let src = |o: usize, scale: f64, n: usize| -> (usize, usize, f64) {
            let p = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
            let lo = p.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            (lo, hi, p - lo as f64)
        };
        let c = self.channels;
        let mut data = Vec::with_capacity(width * height * c);
        for oy in 0..height {
            let (y0, y1, fy) = src(oy, sy, self.height);
            for ox in 0..width {
                let (x0, x1, fx) = src(ox, sx, self.width);
                for ch in 0..c {
                    let top = self.get(x0, y0, ch) * (1.0 - fx) + self.get(x1, y0, ch) * fx;
                    let bottom = self.get(x0, y1, ch) * (1.0 - fx) + self.get(x1, y1, ch) * fx;
                    data.push(top * (1.0 - fy) + bottom * fy);
                }
            }
        }
        Self::new(width, height, c, data)
    }

    /// Planar `[C, H, W]` copy of the samples.
    pub fn to_planar(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.data.len()];
        let plane = self.width * self.height;
        for (i, px) in self.data.chunks(self.channels).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                out[c * plane + i] = v;
            }
        }
        out
    }
}
