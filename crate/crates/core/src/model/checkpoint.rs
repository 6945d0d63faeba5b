use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::math::{AdamState, Bindings, Tensor};

const MAGIC: &[u8; 4] = b"JGCK";
const VERSION: u32 = 1;

/// Model parameters with optimizer state and the tokenizer they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub adam: AdamState,
    /// Fingerprint of the tokenizer the vocabulary ids refer to.
    pub vocab_hash: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    seed: u64,
    step: u64,
    vocab_hash: String,
    adam_step: u64,
    adam_beta1: f64,
    adam_beta2: f64,
    adam_eps: f64,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor<f32>) {
    put_str(out, name);
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &e in t.shape() {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("name is not UTF-8".into()))
    }

    fn tensor(&mut self) -> Result<(String, Tensor<f32>)> {
        let name = self.string()?;
        let rank = self.u32()? as usize;
        let shape = (0..rank).map(|_| Ok(self.u32()? as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))?;
        Ok((name, t))
    }
}

impl Checkpoint {
    /// `JGCK`, u32 version, length-prefixed JSON header, then named tensors
    /// (`param/…`, `adam.m/…`, `adam.v/…`) until the end of the file: each a
    /// length-prefixed name, u32 rank, u32 extents and little-endian f32 data.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.params.config.clone(),
            seed: self.params.seed,
            step: self.params.step,
            vocab_hash: self.vocab_hash.clone(),
            adam_step: self.adam.step,
            adam_beta1: self.adam.beta1,
            adam_beta2: self.adam.beta2,
            adam_eps: self.adam.eps,
        };
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut out, &serde_json::to_string(&header).expect("header serializes"));
        for (prefix, set) in [("param/", &self.params.tensors), ("adam.m/", &self.adam.first), ("adam.v/", &self.adam.second)] {
            for (name, t) in set.iter() {
                put_tensor(&mut out, &format!("{prefix}{name}"), t);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("missing JGCK magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let header: Header = serde_json::from_str(&r.string()?)
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        header.config.validate().map_err(|e| Error::Format(e.to_string()))?;
        let (mut params, mut first, mut second) = (Bindings::new(), Bindings::new(), Bindings::new());
        while r.pos < bytes.len() {
            let (name, t) = r.tensor()?;
            if let Some(n) = name.strip_prefix("param/") {
                params.insert(n, t);
            } else if let Some(n) = name.strip_prefix("adam.m/") {
                first.insert(n, t);
            } else if let Some(n) = name.strip_prefix("adam.v/") {
                second.insert(n, t);
            } else {
                return Err(Error::Format(format!("unexpected tensor `{name}`")));
            }
        }
        let expected = super::params::param_shapes(&header.config);
        for (name, shape) in &expected {
            match params.get(name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                _ => return Err(Error::Format(format!("parameter `{name}` missing or misshapen"))),
            }
        }
        if params.len() != expected.len() {
            return Err(Error::Format("checkpoint holds unknown parameters".into()));
        }
        Ok(Self {
            params: ModelParams {
                config: header.config,
                tensors: params,
                seed: header.seed,
                step: header.step,
            },
            adam: AdamState {
                beta1: header.adam_beta1,
                beta2: header.adam_beta2,
                eps: header.adam_eps,
                step: header.adam_step,
                first,
                second,
            },
            vocab_hash: header.vocab_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// Loads and, when `vocab_hash` is given, checks the tokenizer fingerprint.
    pub fn load(path: &Path, vocab_hash: Option<&str>) -> Result<Self> {
        let ck = Self::from_bytes(&std::fs::read(path)?)?;
        if let Some(h) = vocab_hash {
            if h != ck.vocab_hash {
                return Err(Error::Invalid(format!(
                    "checkpoint was trained with tokenizer {} but {h} is loaded",
                    ck.vocab_hash
                )));
            }
        }
        Ok(ck)
    }
}
