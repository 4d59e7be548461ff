//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes   "QFEDCKPT"
//! version      u32       1
//! input_dim    u64       N
//! layer_count  u32       affine layers (5 for the standard network)
//! tensor_count u32
//! per tensor:
//!   name_len   u32
//!   name       name_len bytes, UTF-8
//!   ndim       u32
//!   dims       ndim x u64
//!   payload    prod(dims) x f64
//! ```
//!
//! Tensors appear in model order. Payloads are always 64-bit, so `f32` models
//! round-trip exactly as well.

use std::io::{Read, Write};
use std::path::Path;

use super::model::{Model, Tensor, TensorRole};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"QFEDCKPT";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<S: Scalar, W: Write>(model: &Model<S>, mut w: W) -> Result<()> {
    let mut buf = Vec::with_capacity(64 + model.parameter_count() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(model.input_dim() as u64).to_le_bytes());
    buf.extend_from_slice(&((model.widths().len() - 1) as u32).to_le_bytes());
    buf.extend_from_slice(&(model.tensors().len() as u32).to_le_bytes());
    for t in model.tensors() {
        buf.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(t.name.as_bytes());
        buf.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in &t.data {
            buf.extend_from_slice(&x.as_f64().to_le_bytes());
        }
    }
    w.write_all(&buf)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io("<checkpoint>", e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint<S: Scalar, R: Read>(mut r: R) -> Result<Model<S>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::io("<checkpoint>", e))?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let input_dim = c.u64()? as usize;
    let layer_count = c.u32()? as usize;
    let tensor_count = c.u32()? as usize;
    let mut tensors = Vec::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        let name_len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(name_len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let ndim = c.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| c.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        if len > bytes.len() / 8 {
            return Err(Error::Checkpoint(format!("tensor `{name}` larger than file")));
        }
        let data = (0..len)
            .map(|_| c.f64().map(S::lit))
            .collect::<Result<Vec<_>>>()?;
        tensors.push(Tensor {
            name,
            // fixed up against the template in Model::from_tensors
            role: TensorRole::Weight,
            shape,
            data,
        });
    }
    if c.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    let mut widths = Vec::new();
    for t in tensors.iter().filter(|t| t.name.ends_with(".weight")) {
        if t.shape.len() != 2 {
            return Err(Error::Checkpoint(format!("weight `{}` is not 2-D", t.name)));
        }
        if widths.is_empty() {
            widths.push(t.shape[0]);
        }
        widths.push(t.shape[1]);
    }
    if widths.first() != Some(&input_dim) || widths.len() != layer_count + 1 {
        return Err(Error::Checkpoint(format!(
            "header says N = {input_dim} with {layer_count} layers, tensors give widths {widths:?}"
        )));
    }
    Model::from_tensors(widths, tensors)
}

pub fn save<S: Scalar>(model: &Model<S>, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(model, std::io::BufWriter::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn load<S: Scalar>(path: &Path) -> Result<Model<S>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};

    #[test]
    fn round_trip_is_bit_exact() {
        let m = Model::<f32>::init(6, 0.1, &mut substream(3, Stream::ModelInit, 0, 0));
        let mut bytes = Vec::new();
        write_checkpoint(&m, &mut bytes).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 6);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 5);
        let back: Model<f32> = read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(back, m);
        let mut again = Vec::new();
        write_checkpoint(&back, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let m = Model::<f64>::zeros(2);
        let mut bytes = Vec::new();
        write_checkpoint(&m, &mut bytes).unwrap();
        assert!(read_checkpoint::<f64, _>(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint::<f64, _>(bad.as_slice()).is_err());
        let mut wrong_n = bytes.clone();
        wrong_n[12] = 9;
        assert!(read_checkpoint::<f64, _>(wrong_n.as_slice()).is_err());
    }
}
