//! Flat binary export of grid fields.
//!
//! A field is written as `<stem>.bin` holding little-endian `complex64`
//! values (pairs of `f32`, real part first) and `<stem>.json` describing the
//! layout. The first grid axis varies fastest.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fewbody::TwoBodyState;
use crate::grid::{Grid2D, WaveFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayHeader {
    pub dtype: String,
    pub byte_order: String,
    /// Extent per axis, fastest axis first.
    pub shape: Vec<usize>,
    pub spacing: f64,
    #[serde(rename = "box")]
    pub side: f64,
    pub order: String,
    /// Coordinate of index 0 along every axis.
    pub origin: f64,
}

impl ArrayHeader {
    fn for_grid(grid: &Grid2D, axes: usize) -> Self {
        Self {
            dtype: "complex64".into(),
            byte_order: "little".into(),
            shape: vec![grid.points(); axes],
            spacing: grid.spacing(),
            side: grid.side(),
            order: "first axis fastest (x1, y1, x2, y2)".into(),
            origin: grid.coord(0),
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

/// Writes `values` with `header`; returns the binary and sidecar paths.
pub fn write_array(stem: &Path, header: &ArrayHeader, values: &[Complex64]) -> Result<(PathBuf, PathBuf)> {
    if header.len() != values.len() {
        return Err(Error::InvalidParameter(format!("header describes {} values, got {}", header.len(), values.len())));
    }
    let (bin, json) = paths(stem);
    let mut out = BufWriter::new(fs::File::create(&bin)?);
    for v in values {
        out.write_all(&(v.re as f32).to_le_bytes())?;
        out.write_all(&(v.im as f32).to_le_bytes())?;
    }
    out.flush()?;
    fs::write(&json, serde_json::to_string_pretty(header)? + "\n")?;
    Ok((bin, json))
}

pub fn read_array(stem: &Path) -> Result<(ArrayHeader, Vec<Complex64>)> {
    let (bin, json) = paths(stem);
    let header: ArrayHeader = serde_json::from_str(&fs::read_to_string(json)?)?;
    let bytes = fs::read(bin)?;
    if bytes.len() != 8 * header.len() {
        return Err(Error::InvalidParameter(format!("expected {} bytes, found {}", 8 * header.len(), bytes.len())));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    Ok((header, values))
}

pub fn export_wavefunction(stem: &Path, u: &WaveFunction) -> Result<(PathBuf, PathBuf)> {
    write_array(stem, &ArrayHeader::for_grid(u.grid(), 2), u.values())
}

pub fn export_two_body(stem: &Path, psi: &TwoBodyState) -> Result<(PathBuf, PathBuf)> {
    write_array(stem, &ArrayHeader::for_grid(psi.grid(), 4), psi.values())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_at_single_precision() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid2D::new(6.0, 16).unwrap();
        let u = WaveFunction::from_fn(grid, |x| Complex64::from_polar((-x[0] * x[0] - x[1] * x[1]).exp(), x[0]));
        let stem = dir.path().join("state");
        export_wavefunction(&stem, &u).unwrap();
        let (header, values) = read_array(&stem).unwrap();
        assert_eq!(header.shape, vec![16, 16]);
        assert_eq!(header.dtype, "complex64");
        assert_eq!(std::fs::metadata(stem.with_extension("bin")).unwrap().len(), 16 * 16 * 8);
        for (a, b) in values.iter().zip(u.values()) {
            assert!((a - b).norm() <= 1e-7 * b.norm().max(1e-30) + 1e-38);
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid2D::new(6.0, 16).unwrap();
        let header = ArrayHeader::for_grid(&grid, 2);
        assert!(write_array(&dir.path().join("x"), &header, &[Complex64::new(0.0, 0.0); 3]).is_err());
    }
}
