//! Versioned binary container for named tensors plus a JSON header.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "MPHCKPT\0"
//! version    u32
//! header     u64 length + UTF-8 JSON
//! count      u32
//! tensor*    u32 name length, name, u8 dtype, u32 rank, u64 dims[rank], values
//! digest     32 bytes SHA-256 of everything above
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{NnError, Result};
use crate::scalar::{DType, Scalar};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"MPHCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub header: serde_json::Value,
    pub tensors: Vec<(String, Tensor<T>)>,
}

fn bad(msg: impl Into<String>) -> NnError {
    NnError::Checkpoint(msg.into())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(bad("truncated file"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(header: serde_json::Value) -> Self {
        Self {
            header,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let header = serde_json::to_vec(&self.header).map_err(|e| bad(e.to_string()))?;
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(T::DTYPE.code());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 32 {
            return Err(bad("file too short"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("digest mismatch"));
        }
        let mut c = Cursor { buf: body, pos: 0 };
        if c.take(8)? != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = c.u32()?;
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let hlen = c.u64()? as usize;
        let header = serde_json::from_slice(c.take(hlen)?).map_err(|e| bad(e.to_string()))?;
        let count = c.u32()?;
        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let nlen = c.u32()? as usize;
            let name = String::from_utf8(c.take(nlen)?.to_vec()).map_err(|e| bad(e.to_string()))?;
            let dtype = DType::from_code(c.u8()?).ok_or_else(|| bad("unknown dtype"))?;
            if dtype != T::DTYPE {
                return Err(bad(format!(
                    "tensor {name} stored as {dtype:?}, expected {:?}",
                    T::DTYPE
                )));
            }
            let rank = c.u32()? as usize;
            let shape = (0..rank)
                .map(|_| c.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let raw = c.take(numel * T::BYTES)?;
            let data = raw.chunks(T::BYTES).map(T::read_le).collect();
            tensors.push((name, Tensor::new(&shape, data)?));
        }
        if c.pos != body.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { header, tensors })
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    /// Writes via a temporary sibling file and an atomic rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
