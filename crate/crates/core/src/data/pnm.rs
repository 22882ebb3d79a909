//! Binary PPM (P6) and PGM (P5) with 8- or 16-bit samples.
//!
//! 16-bit samples are big-endian, per the Netpbm definition.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PnmImage {
    pub width: usize,
    pub height: usize,
    /// 1 for PGM, 3 for PPM.
    pub channels: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl PnmImage {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let magic = match self.channels {
            1 => "P5",
            3 => "P6",
            c => return Err(Error::Data(format!("PNM cannot hold {c} channels"))),
        };
        if self.maxval == 0 {
            return Err(Error::Data("PNM maxval must be positive".into()));
        }
        if self.samples.len() != self.width * self.height * self.channels {
            return Err(Error::Data(
                "PNM sample count does not match extents".into(),
            ));
        }
        if let Some(bad) = self.samples.iter().find(|&&s| s > self.maxval) {
            return Err(Error::Data(format!(
                "sample {bad} exceeds maxval {}",
                self.maxval
            )));
        }
        let mut out =
            format!("{magic}\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if self.maxval < 256 {
            out.extend(self.samples.iter().map(|&s| s as u8));
        } else {
            for &s in &self.samples {
                out.extend_from_slice(&s.to_be_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut at = 0;
        let magic = header_token(bytes, &mut at)?;
        let channels = match magic.as_str() {
            "P5" => 1,
            "P6" => 3,
            other => {
                return Err(Error::format(
                    "magic",
                    format!("unsupported PNM type {other:?}"),
                ))
            }
        };
        let width = header_number(bytes, &mut at, "width")?;
        let height = header_number(bytes, &mut at, "height")?;
        let maxval = header_number(bytes, &mut at, "maxval")?;
        if width == 0 || height == 0 {
            return Err(Error::format("width", "extents must be positive"));
        }
        if maxval == 0 || maxval > 65535 {
            return Err(Error::format(
                "maxval",
                format!("{maxval} out of 1..=65535"),
            ));
        }
        // exactly one whitespace byte separates the header from the raster
        if !bytes.get(at).is_some_and(u8::is_ascii_whitespace) {
            return Err(Error::format("maxval", "missing separator before raster"));
        }
        at += 1;
        let count = width * height * channels;
        let wide = maxval > 255;
        let need = if wide { 2 * count } else { count };
        let raster = bytes
            .get(at..at + need)
            .ok_or_else(|| Error::format("raster", format!("expected {need} bytes")))?;
        let samples: Vec<u16> = if wide {
            raster
                .chunks_exact(2)
                .map(|b| u16::from_be_bytes([b[0], b[1]]))
                .collect()
        } else {
            raster.iter().map(|&b| u16::from(b)).collect()
        };
        if samples.iter().any(|&s| usize::from(s) > maxval) {
            return Err(Error::format("raster", "sample exceeds maxval"));
        }
        Ok(Self {
            width,
            height,
            channels,
            maxval: maxval as u16,
            samples,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| match e {
            Error::Format { field, message } => Error::Format {
                field: format!("{} {field}", path.display()),
                message,
            },
            other => other,
        })
    }
}

fn header_token(bytes: &[u8], at: &mut usize) -> Result<String> {
    loop {
        match bytes.get(*at) {
            Some(b) if b.is_ascii_whitespace() => *at += 1,
            Some(b'#') => {
                while bytes.get(*at).is_some_and(|&b| b != b'\n') {
                    *at += 1;
                }
            }
            Some(_) => break,
            None => return Err(Error::format("header", "truncated")),
        }
    }
    let start = *at;
    while bytes
        .get(*at)
        .is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#')
    {
        *at += 1;
    }
    Ok(String::from_utf8_lossy(&bytes[start..*at]).into_owned())
}

fn header_number(bytes: &[u8], at: &mut usize, field: &str) -> Result<usize> {
    let token = header_token(bytes, at)?;
    token
        .parse()
        .map_err(|_| Error::format(field, format!("not a number: {token:?}")))
}
