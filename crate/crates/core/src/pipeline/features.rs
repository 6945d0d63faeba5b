use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::math::Tensor;

const MAGIC: &[u8; 4] = b"JGFT";

/// `JGFT`, u32 row count, u32 dim, then little-endian f32 rows.
pub fn features_to_bytes(t: &Tensor<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * t.numel());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn features_from_bytes(bytes: &[u8]) -> Result<Tensor<f32>> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing JGFT magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (count, dim) = (word(4), word(8));
    let payload = &bytes[12..];
    if dim == 0 || count.checked_mul(dim).and_then(|n| n.checked_mul(4)) != Some(payload.len()) {
        return Err(Error::Format(format!(
            "JGFT header declares {count}x{dim} values but the payload holds {} bytes",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Tensor::new(vec![count, dim], data)
}

pub fn write_features(path: &Path, t: &Tensor<f32>) -> Result<()> {
    std::fs::write(path, features_to_bytes(t))?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<Tensor<f32>> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Invalid(format!("cannot read features {}: {e}", path.display())))?;
    features_from_bytes(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Maps feature keys to files in one directory.
#[derive(Clone, Debug)]
pub struct FeatureStore {
    pub dir: PathBuf,
}

impl FeatureStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.jgft"))
    }

    pub fn load(&self, key: &str) -> Result<Tensor<f32>> {
        read_features(&self.path(key))
    }

    pub fn save(&self, key: &str, t: &Tensor<f32>) -> Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        write_features(&self.path(key), t)
    }
}
