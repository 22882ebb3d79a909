//! Attention maps as CSV files.
//!
//! One file per map, header row of context-frame indices, then one row per
//! query frame. Self-attention maps are `{stream}_{layer}_{head}.csv`; the
//! mutual maps are written per head as `mutual_{direction}_{head}.csv` and
//! averaged over heads as `mutual_rgb2depth.csv` / `mutual_depth2rgb.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::trear::AttentionMaps;
use crate::error::{Error, Result};
use crate::tensor::NdArray;

pub fn map_to_csv(map: &NdArray) -> Result<String> {
    let (rows, cols) = map.dims2()?;
    let mut out = String::new();
    let header: Vec<String> = (0..cols).map(|c| c.to_string()).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in 0..rows {
        let cells: Vec<String> = map.row(r).iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Parses a map written by [`map_to_csv`].
pub fn csv_to_map(text: &str) -> Result<NdArray> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format("header", "empty file"))?;
    let cols = header.split(',').count();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(format!("row {i}"), e.to_string()))?;
        if row.len() != cols {
            return Err(Error::format(
                format!("row {i}"),
                format!("{} cells, header has {cols}", row.len()),
            ));
        }
        rows.push(row);
    }
    NdArray::from_rows(&rows)
}

fn mean_map(maps: &[NdArray]) -> Option<NdArray> {
    let first = maps.first()?;
    let mut acc = NdArray::zeros(first.shape());
    for m in maps {
        for (a, v) in acc.data_mut().iter_mut().zip(m.data()) {
            *a += v;
        }
    }
    let n = maps.len() as f64;
    Some(acc.map(|v| v / n))
}

/// Writes every map to `dir`, returning the paths in write order.
pub fn write_attention_csvs(maps: &AttentionMaps, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<(String, NdArray)> = Vec::new();
    for (stream, layers) in [("rgb", &maps.rgb), ("depth", &maps.depth)] {
        for (l, heads) in layers.iter().enumerate() {
            for (h, m) in heads.iter().enumerate() {
                files.push((format!("{stream}_{l}_{h}.csv"), m.clone()));
            }
        }
    }
    for (direction, heads) in [
        ("rgb2depth", &maps.rgb2depth),
        ("depth2rgb", &maps.depth2rgb),
    ] {
        if let Some(mean) = mean_map(heads) {
            files.push((format!("mutual_{direction}.csv"), mean));
        }
        for (h, m) in heads.iter().enumerate() {
            files.push((format!("mutual_{direction}_{h}.csv"), m.clone()));
        }
    }
    let mut written = Vec::with_capacity(files.len());
    for (name, map) in files {
        let path = dir.join(name);
        fs::write(&path, map_to_csv(&map)?).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Short text listing of row sums, for logs.
pub fn describe(maps: &AttentionMaps) -> String {
    let mut out = String::new();
    let worst = maps
        .all()
        .flat_map(|m| {
            m.rows()
                .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
                .collect::<Vec<_>>()
        })
        .fold(0.0f64, f64::max);
    let _ = write!(
        out,
        "{} maps, max |row sum - 1| = {worst:e}",
        maps.all().count()
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let m = NdArray::from_rows(&[vec![0.1, 0.9], vec![1.0 / 3.0, 2.0 / 3.0]]).unwrap();
        let text = map_to_csv(&m).unwrap();
        assert!(text.starts_with("0,1\n"));
        assert_eq!(csv_to_map(&text).unwrap(), m);
    }
}
