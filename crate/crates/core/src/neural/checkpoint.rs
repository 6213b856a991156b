//! `RLCK` parameter files: magic, `u32` version, then one record per tensor
//! (`u16` name length, UTF-8 name, `u32` rank, `u32` dims, little-endian f64
//! payload) until end of file.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{Parameters, Tensor};

pub const MAGIC: &[u8; 4] = b"RLCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("checkpoint does not match the model: {0}")]
    Mismatch(String),
}

pub fn write_params<W: Write, P: Parameters + ?Sized>(mut w: W, params: &P) -> Result<(), CheckpointError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for (name, t) in params.named_params() {
        let len = u16::try_from(name.len())
            .map_err(|_| CheckpointError::Format(format!("name too long: {name}")))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for d in t.shape() {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Parses every record of a checkpoint.
pub fn read_records<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>, CheckpointError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(CheckpointError::Format("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Format(format!("unsupported version {version}")));
    }
    let mut out = Vec::new();
    while cur.pos < buf.len() {
        let len = u16::from_le_bytes(cur.take(2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(cur.take(len)?.to_vec())
            .map_err(|_| CheckpointError::Format("tensor name is not UTF-8".into()))?;
        let rank = cur.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        let bytes = cur.take(n.checked_mul(8).ok_or_else(|| CheckpointError::Format("tensor too large".into()))?)?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let t = Tensor::from_vec(&shape, data).map_err(|e| CheckpointError::Format(e.to_string()))?;
        out.push((name, t));
    }
    Ok(out)
}

/// Overwrites `params` from a checkpoint whose names and shapes must match
/// exactly and in order.
pub fn read_params<R: Read, P: Parameters + ?Sized>(r: R, params: &mut P) -> Result<(), CheckpointError> {
    let records = read_records(r)?;
    let mut targets = params.named_params_mut();
    if records.len() != targets.len() {
        return Err(CheckpointError::Mismatch(format!(
            "{} tensors in file, model has {}",
            records.len(),
            targets.len()
        )));
    }
    for ((name, t), (want, dst)) in records.iter().zip(&targets) {
        if name != want || t.shape() != dst.shape() {
            return Err(CheckpointError::Mismatch(format!(
                "record {name} {:?} where {want} {:?} was expected",
                t.shape(),
                dst.shape()
            )));
        }
    }
    for ((_, t), (_, dst)) in records.into_iter().zip(targets.iter_mut()) {
        **dst = t;
    }
    Ok(())
}

pub fn save<P: Parameters + ?Sized>(path: &Path, params: &P) -> Result<(), CheckpointError> {
    let mut buf = Vec::new();
    write_params(&mut buf, params)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load<P: Parameters + ?Sized>(path: &Path, params: &mut P) -> Result<(), CheckpointError> {
    read_params(fs::File::open(path)?, params)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Format(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
