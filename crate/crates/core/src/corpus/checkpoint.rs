//! Checkpoint container.
//!
//! ```text
//! "SQEC" | version: u32 = 1 | table_len: u32 | shape table (UTF-8 JSON)
//! | float32 LE parameter blobs, concatenated in shape-table order
//! ```
//!
//! The shape table is `{"config": <any JSON>, "tensors": [{"name", "shape"}]}`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embeddings::Reader;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SQEC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShapeTable {
    config: serde_json::Value,
    tensors: Vec<TensorSpec>,
}

/// Named float32 tensors plus an opaque JSON configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: serde_json::Value,
    pub tensors: Vec<(TensorSpec, Vec<f32>)>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        for (spec, data) in &self.tensors {
            if spec.numel() != data.len() {
                return Err(Error::Format(format!(
                    "tensor {} has shape {:?} but {} values",
                    spec.name,
                    spec.shape,
                    data.len()
                )));
            }
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("tensor {} has non-finite values", spec.name)));
            }
        }
        let table = ShapeTable {
            config: self.config.clone(),
            tensors: self.tensors.iter().map(|(s, _)| s.clone()).collect(),
        };
        let json = serde_json::to_vec(&table).expect("shape table serializes");
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
        buf.extend_from_slice(&json);
        for (_, data) in &self.tensors {
            for v in data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("bad magic, not a checkpoint".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Version {
                found: version,
                expected: VERSION,
            });
        }
        let table_len = r.u32()? as usize;
        let table: ShapeTable = serde_json::from_slice(r.take(table_len)?)
            .map_err(|e| Error::Format(format!("corrupted shape table: {e}")))?;
        let mut tensors = Vec::with_capacity(table.tensors.len());
        for spec in table.tensors {
            let n = spec
                .shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| Error::Format(format!("tensor {} shape overflows", spec.name)))?;
            let raw = r.take(n)?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("tensor {} has non-finite values", spec.name)));
            }
            tensors.push((spec, data));
        }
        if r.remaining() != 0 {
            return Err(Error::Format(format!(
                "{} bytes after the last tensor do not match the shape table",
                r.remaining()
            )));
        }
        Ok(Checkpoint {
            config: table.config,
            tensors,
        })
    }
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ckpt.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            config: serde_json::json!({"dim": 2}),
            tensors: vec![
                (
                    TensorSpec {
                        name: "w".into(),
                        shape: vec![2, 2],
                    },
                    vec![1.0, -2.0, 0.5, 3.25],
                ),
                (
                    TensorSpec {
                        name: "b".into(),
                        shape: vec![2],
                    },
                    vec![0.0, -0.0],
                ),
            ],
        }
    }

    #[test]
    fn round_trip() {
        let bytes = sample().to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.tensors[1].1[1].to_bits(), (-0.0f32).to_bits());
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[..4].copy_from_slice(b"SQEM");
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::Version { found: 7, .. })
        ));
    }

    #[test]
    fn corrupted_shape_table() {
        let mut bytes = sample().to_bytes().unwrap();
        // Break the JSON syntax.
        bytes[12] = b'#';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn shape_table_disagreeing_with_payload() {
        let mut ckpt = sample();
        ckpt.tensors.pop();
        let mut bytes = ckpt.to_bytes().unwrap();
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        assert!(Checkpoint::from_bytes(&bytes).is_err());
        bytes.truncate(bytes.len() - 8);
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Truncated { .. })));
    }

    #[test]
    fn nan_weight_rejected_on_load() {
        let mut bytes = sample().to_bytes().unwrap();
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }
}
