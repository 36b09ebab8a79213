//! Named-tensor container: the on-disk format of encoder and bundle files.
//!
//! ```text
//! magic       4 bytes   "NTC1"
//! meta_len    u64 LE
//! meta        meta_len bytes of UTF-8 (JSON by convention)
//! count       u32 LE
//! count x {
//!   name_len  u32 LE
//!   name      name_len bytes of UTF-8
//!   ndim      u32 LE    (always 2)
//!   dims      ndim x u64 LE
//!   values    prod(dims) x f64 LE, row-major
//! }
//! checksum    32 bytes, SHA-256 of every preceding byte
//! ```

use sha2::{Digest, Sha256};

use crate::tensor::Tensor;
use crate::NeuralError;

pub const MAGIC: &[u8; 4] = b"NTC1";
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NamedTensors {
    pub meta: String,
    pub tensors: Vec<(String, Tensor)>,
}

/// Lower-case hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl NamedTensors {
    pub fn new(meta: impl Into<String>, tensors: Vec<(String, Tensor)>) -> Self {
        NamedTensors {
            meta: meta.into(),
            tensors,
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Entries whose name starts with `prefix`, with the prefix removed.
    pub fn with_prefix(&self, prefix: &str) -> Vec<(String, Tensor)> {
        self.tensors
            .iter()
            .filter_map(|(n, t)| n.strip_prefix(prefix).map(|rest| (rest.to_string(), t.clone())))
            .collect()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.meta.len() + self.num_values() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.meta.len() as u64).to_le_bytes());
        out.extend_from_slice(self.meta.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&2u32.to_le_bytes());
            out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
            out.extend(t.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NeuralError> {
        if bytes.len() < MAGIC.len() + CHECKSUM_LEN || &bytes[..4] != MAGIC {
            return Err(NeuralError::Container("not a named-tensor file".into()));
        }
        let (body, stored) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        let actual = Sha256::digest(body);
        if actual.as_slice() != stored {
            return Err(NeuralError::Checksum {
                expected: hex::encode(stored),
                actual: hex::encode(actual),
            });
        }
        let mut r = Reader { buf: body, pos: 4 };
        let meta_len = r.u64()? as usize;
        let meta = String::from_utf8(r.take(meta_len)?.to_vec())
            .map_err(|_| NeuralError::Container("metadata is not UTF-8".into()))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| NeuralError::Container("tensor name is not UTF-8".into()))?;
            let ndim = r.u32()?;
            if ndim != 2 {
                return Err(NeuralError::Container(format!(
                    "tensor `{}` has {} dims, only 2 are supported",
                    name, ndim
                )));
            }
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| NeuralError::Container("tensor too large".into()))?;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| {
                NeuralError::Container("tensor too large".into())
            })?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((name, Tensor::from_vec(rows, cols, data)));
        }
        if r.pos != body.len() {
            return Err(NeuralError::Container("trailing bytes before checksum".into()));
        }
        Ok(NamedTensors { meta, tensors })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NeuralError> {
        if self.pos + n > self.buf.len() {
            return Err(NeuralError::Container("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NeuralError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NeuralError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
