//! Checkpoint files: an 8-byte magic, a little-endian `u64` manifest length,
//! the JSON manifest, then every parameter as little-endian `f32` values in
//! manifest order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParamSet, Real, Tensor};

pub const MAGIC: &[u8; 8] = b"GAINCKPT";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("not a checkpoint file (bad magic)")]
    Magic,
    #[error("checkpoint truncated while reading {0}")]
    Truncated(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: [usize; 2],
}

/// Optimizer scalars stored alongside the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamScalars {
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub params: Vec<ParamEntry>,
    pub adam: Option<AdamScalars>,
    /// Free-form metadata: architecture, training configuration, metrics.
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub fn save<T: Real>(
    path: &Path,
    params: &ParamSet<T>,
    adam: Option<AdamScalars>,
    meta: serde_json::Value,
) -> Result<(), CheckpointError> {
    let manifest = Manifest {
        params: params
            .iter()
            .map(|(_, name, v)| ParamEntry {
                name: name.to_string(),
                shape: [v.rows(), v.cols()],
            })
            .collect(),
        adam,
        meta,
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for (_, _, v) in params.iter() {
        for &x in v.data() {
            w.write_all(&(x.as_f64() as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load<T: Real>(path: &Path) -> Result<(Manifest, ParamSet<T>), CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| CheckpointError::Magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::Magic);
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)
        .map_err(|_| CheckpointError::Truncated("manifest length".into()))?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut json)
        .map_err(|_| CheckpointError::Truncated("manifest".into()))?;
    let manifest: Manifest = serde_json::from_slice(&json)?;
    let mut params = ParamSet::new();
    for entry in &manifest.params {
        let [rows, cols] = entry.shape;
        let mut bytes = vec![0u8; rows * cols * 4];
        r.read_exact(&mut bytes)
            .map_err(|_| CheckpointError::Truncated(entry.name.clone()))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        let t = Tensor::from_vec(rows, cols, data).expect("shape from manifest");
        params.insert(entry.name.clone(), t);
    }
    Ok((manifest, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_names_shapes_and_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut p = ParamSet::<f32>::new();
        p.insert("a.weight", Tensor::from_rows(&[&[1.0, -2.5], &[3.25, 0.0]]));
        p.insert("a.bias", Tensor::row_vector(&[0.5, 0.125]));
        let adam = AdamScalars {
            step: 7,
            learning_rate: 0.0025,
            beta1: 0.9,
            beta2: 0.999,
            delta: 1e-8,
        };
        save(&path, &p, Some(adam.clone()), serde_json::json!({"k": 2})).unwrap();
        let (m, q) = load::<f32>(&path).unwrap();
        assert_eq!(m.adam, Some(adam));
        assert_eq!(m.meta["k"], 2);
        assert_eq!(q.len(), 2);
        for (id, name, v) in p.iter() {
            assert_eq!(q.name(id), name);
            assert_eq!(q.get(id), v);
        }
    }

    #[test]
    fn rejects_foreign_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x");
        std::fs::write(&path, b"hello world, not a checkpoint").unwrap();
        assert!(matches!(load::<f32>(&path), Err(CheckpointError::Magic)));
    }
}
