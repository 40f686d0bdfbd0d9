//! Self-describing binary checkpoints.
//!
//! Layout: the 8-byte magic `SHRBCKPT`, a little-endian `u64` header
//! length, a UTF-8 JSON header, then every parameter's values as
//! little-endian `f64` in header order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"SHRBCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint header: {0}")]
    Header(String),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint has no parameter {0:?}")]
    MissingParam(String),
    #[error("parameter {name:?} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        found: (usize, usize),
        expected: (usize, usize),
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, CheckpointError>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub version: u32,
    pub stage: String,
    pub config_hash: String,
    pub params: Vec<ParamEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub stage: String,
    pub config_hash: String,
    pub params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new(stage: &str, config_hash: &str) -> Self {
        Self {
            stage: stage.to_string(),
            config_hash: config_hash.to_string(),
            params: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, t: &Tensor) {
        self.params.push((name.into(), t.clone()));
    }

    pub fn extend<'a>(&mut self, prefix: &str, named: impl IntoIterator<Item = (String, &'a Tensor)>) {
        for (n, t) in named {
            self.push(format!("{prefix}{n}"), t);
        }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| CheckpointError::MissingParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.iter().any(|(n, _)| n == name)
    }

    /// Copies `name` into `target`, which must already have the right shape.
    pub fn load_into(&self, name: &str, target: &mut Tensor) -> Result<()> {
        let t = self.get(name)?;
        if t.shape() != target.shape() {
            return Err(CheckpointError::ShapeMismatch {
                name: name.to_string(),
                found: t.shape(),
                expected: target.shape(),
            });
        }
        *target = t.clone();
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            version: FORMAT_VERSION,
            stage: self.stage.clone(),
            config_hash: self.config_hash.clone(),
            params: self
                .params
                .iter()
                .map(|(n, t)| ParamEntry {
                    name: n.clone(),
                    rows: t.rows(),
                    cols: t.cols(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| CheckpointError::Header(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for (_, t) in &self.params {
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 30 {
            return Err(CheckpointError::Header(format!("implausible header length {len}")));
        }
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| CheckpointError::Header(e.to_string()))?;
        if header.version != FORMAT_VERSION {
            return Err(CheckpointError::Version(header.version));
        }
        let mut params = Vec::with_capacity(header.params.len());
        for p in header.params {
            let mut data = vec![0.0; p.rows * p.cols];
            let mut buf = [0u8; 8];
            for v in &mut data {
                r.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
            let t = Tensor::from_vec(p.rows, p.cols, data).map_err(|e| CheckpointError::Header(e.to_string()))?;
            params.push((p.name, t));
        }
        Ok(Self {
            stage: header.stage,
            config_hash: header.config_hash,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
