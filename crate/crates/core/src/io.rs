//! Raw function files: little-endian `f64` cells plus a JSON sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TorusSpace;
use crate::haar::MultiFunction;

pub const ORDER: &str = "parameter-major";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub n: usize,
    pub dims: Vec<u32>,
    #[serde(rename = "L")]
    pub depth: u32,
    pub order: String,
}

impl Sidecar {
    pub fn of(space: &TorusSpace) -> Self {
        Self {
            n: space.n(),
            dims: space.dims().to_vec(),
            depth: space.depth(),
            order: ORDER.into(),
        }
    }
}

/// `data.json` next to `data.f64`.
pub fn sidecar_path(data: &Path) -> PathBuf {
    data.with_extension("json")
}

pub fn encode(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::ShapeMismatch(format!("{} bytes is not a whole number of f64", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_function(path: &Path, f: &MultiFunction) -> Result<()> {
    fs::write(path, encode(f.values()))?;
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(&Sidecar::of(f.space()))?)?;
    Ok(())
}

/// Reads a function and checks its sidecar against `space`.
pub fn read_function(path: &Path, space: &TorusSpace) -> Result<MultiFunction> {
    let side: Sidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    if side != Sidecar::of(space) {
        return Err(Error::ShapeMismatch(format!(
            "file describes n={} dims={:?} L={} order={}, expected n={} dims={:?} L={}",
            side.n,
            side.dims,
            side.depth,
            side.order,
            space.n(),
            space.dims(),
            space.depth()
        )));
    }
    MultiFunction::new(space.clone(), decode(&fs::read(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let space = TorusSpace::new(vec![1, 2], 3, 0.5, 1).unwrap();
        let vals: Vec<f64> = (0..space.total_cells()).map(|i| (i as f64).sin() * 1e-3).collect();
        let f = MultiFunction::new(space.clone(), vals).unwrap();
        let p = dir.path().join("f.f64");
        write_function(&p, &f).unwrap();
        assert_eq!(fs::read(&p).unwrap().len(), 8 * space.total_cells());
        let side: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("f.json")).unwrap()).unwrap();
        assert_eq!(side["L"], 3);
        assert_eq!(side["order"], ORDER);
        assert_eq!(read_function(&p, &space).unwrap(), f);
    }

    #[test]
    fn mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let space = TorusSpace::uniform(2, 3, 0.5, 1).unwrap();
        let p = dir.path().join("g.f64");
        write_function(&p, &MultiFunction::constant(&space, 1.0)).unwrap();
        let other = TorusSpace::uniform(2, 4, 0.5, 1).unwrap();
        assert!(matches!(read_function(&p, &other), Err(Error::ShapeMismatch(_))));
        assert!(decode(&[0; 7]).is_err());
    }
}
