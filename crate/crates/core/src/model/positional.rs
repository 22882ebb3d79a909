use crate::error::{Error, Result};
use crate::tensor::NdArray;

/// Sinusoidal frame-position table, `frames × d_model`.
///
/// Column `2i` holds `sin(pos / 10000^(2i/d_model))` and column `2i + 1`
/// the cosine of the same angle.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionalEncodingTable {
    table: NdArray,
}

impl PositionalEncodingTable {
    pub fn new(frames: usize, d_model: usize) -> Result<Self> {
        if d_model == 0 || !d_model.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "positional encoding needs an even d_model, got {d_model}"
            )));
        }
        if frames == 0 {
            return Err(Error::Config(
                "positional encoding needs frames >= 1".into(),
            ));
        }
        let mut data = Vec::with_capacity(frames * d_model);
        for pos in 0..frames {
            for pair in 0..d_model / 2 {
                let angle = pos as f64 * frequency(pair, d_model);
                data.push(angle.sin());
                data.push(angle.cos());
            }
        }
        Ok(Self {
            table: NdArray::new(vec![frames, d_model], data)?,
        })
    }

    pub fn as_array(&self) -> &NdArray {
        &self.table
    }

    pub fn into_array(self) -> NdArray {
        self.table
    }

    pub fn get(&self, pos: usize, dim: usize) -> f64 {
        self.table.get2(pos, dim)
    }
}

/// Angular frequency of sine/cosine pair `pair`: `1 / 10000^(2·pair/d_model)`.
pub fn frequency(pair: usize, d_model: usize) -> f64 {
    1.0 / 10000f64.powf((2 * pair) as f64 / d_model as f64)
}

pub fn positional_encoding(frames: usize, d_model: usize) -> Result<PositionalEncodingTable> {
    PositionalEncodingTable::new(frames, d_model)
}
