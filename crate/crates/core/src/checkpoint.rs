//! Model checkpoint file.
//!
//! Little-endian layout: magic `VSTM`, version `u16`, model kind tag (`u16`
//! length + UTF-8 bytes), tensor count `u32`, then per tensor: name length
//! `u16`, name bytes, rank `u8`, `rank` dims as `u32`, and the `f32` data in
//! row-major order. Tensors appear in the model's declaration order.

use std::path::Path;

use ndarray::{ArrayD, ArrayViewD, IxDyn};

pub const MAGIC: &[u8; 4] = b"VSTM";
pub const VERSION: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("bad magic: not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated checkpoint at byte offset {0}")]
    Truncated(usize),
    #[error("checkpoint holds a {found:?} model, expected {expected:?}")]
    WrongKind { expected: String, found: String },
    #[error("checkpoint lacks tensor {0:?}")]
    MissingTensor(String),
    #[error("tensor {name:?} has shape {found:?}, expected {expected:?}")]
    Shape { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn from_view(name: impl Into<String>, view: ArrayViewD<'_, f32>) -> Self {
        Tensor { name: name.into(), dims: view.shape().to_vec(), data: view.iter().copied().collect() }
    }

    pub fn scalar_list(name: impl Into<String>, values: Vec<f32>) -> Self {
        Tensor { name: name.into(), dims: vec![values.len()], data: values }
    }

    pub fn to_array(&self) -> ArrayD<f32> {
        ArrayD::from_shape_vec(IxDyn(&self.dims), self.data.clone()).expect("dims match data")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>) -> Self {
        Checkpoint { kind: kind.into(), tensors: Vec::new() }
    }

    pub fn push(&mut self, tensor: Tensor) {
        self.tensors.push(tensor);
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), CheckpointError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(CheckpointError::WrongKind { expected: kind.into(), found: self.kind.clone() })
        }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, CheckpointError> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| CheckpointError::MissingTensor(name.into()))
    }

    /// Fetches a tensor and checks its shape.
    pub fn array(&self, name: &str, shape: &[usize]) -> Result<ArrayD<f32>, CheckpointError> {
        let t = self.get(name)?;
        if t.dims != shape {
            return Err(CheckpointError::Shape { name: name.into(), expected: shape.to_vec(), found: t.dims.clone() });
        }
        Ok(t.to_array())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.kind.len() as u16).to_le_bytes());
        out.extend_from_slice(self.kind.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.dims.len() as u8);
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut pos = 4;
        let mut take = |n: usize| -> Result<&[u8], CheckpointError> {
            let end = pos + n;
            if end > bytes.len() {
                return Err(CheckpointError::Truncated(pos));
            }
            let s = &bytes[pos..end];
            pos = end;
            Ok(s)
        };
        let u16_at = |s: &[u8]| u16::from_le_bytes([s[0], s[1]]);
        let u32_at = |s: &[u8]| u32::from_le_bytes([s[0], s[1], s[2], s[3]]);
        let version = u16_at(take(2)?);
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let kind_len = u16_at(take(2)?) as usize;
        let kind = String::from_utf8(take(kind_len)?.to_vec())
            .map_err(|_| CheckpointError::Malformed("kind tag is not UTF-8".into()))?;
        let count = u32_at(take(4)?) as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = u16_at(take(2)?) as usize;
            let name = String::from_utf8(take(name_len)?.to_vec())
                .map_err(|_| CheckpointError::Malformed("tensor name is not UTF-8".into()))?;
            let rank = take(1)?[0] as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(u32_at(take(4)?) as usize);
            }
            let n = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| CheckpointError::Malformed(format!("tensor {name:?} is too large")))?;
            let data = take(n)?.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            tensors.push(Tensor { name, dims, data });
        }
        if pos != bytes.len() {
            return Err(CheckpointError::Malformed(format!("trailing bytes at offset {pos}")));
        }
        Ok(Checkpoint { kind, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.encode()).map_err(|e| CheckpointError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
        let bytes = std::fs::read(path).map_err(|e| CheckpointError::Io(format!("{}: {e}", path.display())))?;
        Checkpoint::decode(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_round_trip() {
        let mut c = Checkpoint::new("demo");
        c.push(Tensor { name: "w".into(), dims: vec![2, 3], data: vec![1.0, -2.5, 3.0, 0.0, f32::MIN_POSITIVE, 7.0] });
        c.push(Tensor::scalar_list("meta", vec![4.0]));
        let bytes = c.encode();
        assert_eq!(Checkpoint::decode(&bytes).unwrap(), c);
        assert!(matches!(Checkpoint::decode(&bytes[..bytes.len() - 1]), Err(CheckpointError::Truncated(_))));
        assert!(matches!(Checkpoint::decode(b""), Err(CheckpointError::BadMagic)));
        assert!(c.array("w", &[3, 2]).is_err());
        assert!(c.expect_kind("other").is_err());
    }
}
