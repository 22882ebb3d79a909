//! Binary tensor container.
//!
//! Layout: the ASCII magic `TREARCKPT1`, then entries until end of file.
//! Each entry is a u64 name length, the UTF-8 name, a u64 rank, `rank` u64
//! extents and `product(extents)` f64 values. All integers and floats are
//! little-endian.

use std::fs;
use std::path::Path;

use super::NdArray;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 10] = b"TREARCKPT1";

pub fn encode(entries: &[(String, NdArray)]) -> Vec<u8> {
    let payload: usize = entries
        .iter()
        .map(|(n, a)| 16 + n.len() + 8 * a.rank() + 8 * a.len())
        .sum();
    let mut out = Vec::with_capacity(MAGIC.len() + payload);
    out.extend_from_slice(MAGIC);
    for (name, array) in entries {
        out.extend_from_slice(&(name.len() as u64).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(array.rank() as u64).to_le_bytes());
        for &extent in array.shape() {
            out.extend_from_slice(&(extent as u64).to_le_bytes());
        }
        for &v in array.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, NdArray)>> {
    let mut cursor = Cursor { bytes, at: 0 };
    if cursor.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::format("magic", "not a TREARCKPT1 file"));
    }
    let mut entries = Vec::new();
    while cursor.at < bytes.len() {
        let name_len = cursor.u64("name length")? as usize;
        let name = std::str::from_utf8(cursor.take(name_len, "name")?)
            .map_err(|e| Error::format("name", e.to_string()))?
            .to_owned();
        let rank = cursor.u64("rank")? as usize;
        if rank > 16 {
            return Err(Error::format(
                "rank",
                format!("{name}: implausible rank {rank}"),
            ));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cursor.u64("extent")? as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .filter(|&n| n.checked_mul(8).is_some_and(|b| b <= bytes.len()))
            .ok_or_else(|| Error::format("extent", format!("{name}: shape {shape:?} too large")))?;
        let raw = cursor.take(numel * 8, "payload")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let array = NdArray::new(shape, data)
            .map_err(|e| Error::format("extent", format!("{name}: {e}")))?;
        entries.push((name, array));
    }
    Ok(entries)
}

pub fn write_file(path: &Path, entries: &[(String, NdArray)]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, encode(entries)).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<(String, NdArray)>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(field, format!("truncated at byte {}", self.at)))?;
        let slice = &self.bytes[self.at..end];
        self.at = end;
        Ok(slice)
    }

    fn u64(&mut self, field: &str) -> Result<u64> {
        let raw = self.take(8, field)?;
        Ok(u64::from_le_bytes(raw.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_exact() {
        let entries = vec![("ab".to_string(), NdArray::vector(vec![1.0]))];
        let bytes = encode(&entries);
        let mut expected = b"TREARCKPT1".to_vec();
        expected.extend_from_slice(&2u64.to_le_bytes());
        expected.extend_from_slice(b"ab");
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(&1.0f64.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn special_values_survive() {
        let values = vec![f64::NAN, -0.0, f64::INFINITY, f64::MIN_POSITIVE, 1e-310];
        let entries = vec![
            ("scalar".to_string(), NdArray::scalar(2.5)),
            (
                "odd".to_string(),
                NdArray::new(vec![5, 1], values.clone()).unwrap(),
            ),
        ];
        let back = decode(&encode(&entries)).unwrap();
        assert_eq!(back[0], entries[0]);
        let bits: Vec<u64> = back[1].1.data().iter().map(|v| v.to_bits()).collect();
        let want: Vec<u64> = values.iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, want);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(matches!(decode(b"NOTACKPT00"), Err(Error::Format { .. })));
        let mut bytes = encode(&[("w".into(), NdArray::vector(vec![1.0, 2.0]))]);
        bytes.pop();
        match decode(&bytes) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "payload"),
            other => panic!("expected payload error, got {other:?}"),
        }
    }
}
