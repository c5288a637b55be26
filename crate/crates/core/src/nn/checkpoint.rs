//! Versioned binary parameter table.
//!
//! Layout (little-endian): magic `CKPT`, `u32` format version, `u32` entry
//! count, then per entry `u32` name length, UTF-8 name, `u32` rank, `u32`
//! dimensions, and the row-major `f32` values.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Real, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub entries: Vec<CheckpointEntry>,
}

impl Checkpoint {
    pub fn push_tensor<T: Real>(&mut self, name: impl Into<String>, t: &Tensor<T>) {
        self.push_raw(name, t.shape().to_vec(), t.data());
    }

    pub fn push_raw<T: Real>(&mut self, name: impl Into<String>, shape: Vec<usize>, data: &[T]) {
        self.entries.push(CheckpointEntry {
            name: name.into(),
            shape,
            data: data.iter().map(|v| v.as_f64() as f32).collect(),
        });
    }

    pub fn get(&self, name: &str) -> Option<&CheckpointEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Copies the named entry into `dst`, converting precision.
    pub fn load_into<T: Real>(&self, name: &str, dst: &mut Tensor<T>) -> Result<()> {
        let e = self
            .get(name)
            .ok_or_else(|| Error::State(format!("checkpoint has no entry `{name}`")))?;
        if e.shape != dst.shape() {
            return Err(Error::dim(format!("checkpoint entry `{name}`"), format!("{:?}", dst.shape()), format!("{:?}", e.shape)));
        }
        dst.data_mut()
            .iter_mut()
            .zip(&e.data)
            .for_each(|(d, &s)| *d = T::lit(s as f64));
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
            for &d in &e.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &e.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::format(path, "bad checkpoint magic (expected CKPT)"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
        }
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::format(path, "entry name is not UTF-8"))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            entries.push(CheckpointEntry { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::format(path, "trailing bytes after last entry"));
        }
        Ok(Self { entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(self.path, "truncated checkpoint"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
