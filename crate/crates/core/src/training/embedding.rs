//! RLEM embedding files: magic `RLEM`, then little-endian u32 version, rows,
//! cols and valid_rows, then `rows * cols` little-endian f32 values in
//! row-major order. Rows at or beyond `valid_rows` must be zero.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Result, TrainingError};

pub const MAGIC: &[u8; 4] = b"RLEM";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub rows: usize,
    pub cols: usize,
    pub valid: usize,
    pub data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, cols: usize, valid: usize, data: Vec<f32>) -> Result<Self> {
        let m = EmbeddingMatrix { rows, cols, valid, data };
        m.validate()?;
        Ok(m)
    }

    /// A single-row matrix holding one vector.
    pub fn vector(v: Vec<f32>) -> Result<Self> {
        Self::new(1, v.len(), 1, v)
    }

    fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(fmt(format!("empty shape {}x{}", self.rows, self.cols)));
        }
        if self.valid == 0 || self.valid > self.rows {
            return Err(fmt(format!("valid rows {} outside 1..={}", self.valid, self.rows)));
        }
        if self.data.len() != self.rows * self.cols {
            return Err(fmt(format!("{} values for a {}x{} matrix", self.data.len(), self.rows, self.cols)));
        }
        if self.data[self.valid * self.cols..].iter().any(|&v| v != 0.0) {
            return Err(fmt("nonzero padding row".into()));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(fmt("non-finite value".into()));
        }
        Ok(())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn expect_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if (self.rows, self.cols) != (rows, cols) {
            return Err(fmt(format!("shape {}x{}, expected {rows}x{cols}", self.rows, self.cols)));
        }
        Ok(())
    }
}

fn fmt(msg: String) -> TrainingError {
    TrainingError::Format(msg)
}

pub fn write_embedding<W: Write>(mut w: W, m: &EmbeddingMatrix) -> Result<()> {
    m.validate()?;
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * m.data.len());
    buf.extend_from_slice(MAGIC);
    for v in [VERSION, m.rows as u32, m.cols as u32, m.valid as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in &m.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_embedding<R: Read>(mut r: R) -> Result<EmbeddingMatrix> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN {
        return Err(fmt(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(fmt("bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (version, rows, cols, valid) = (word(0), word(1), word(2), word(3));
    if version != VERSION as usize {
        return Err(fmt(format!("unsupported version {version}")));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| fmt("shape overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(fmt(format!("payload is {} bytes, header implies {expected}", payload.len())));
    }
    let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    EmbeddingMatrix::new(rows, cols, valid, data)
}

pub fn save_embedding(path: &Path, m: &EmbeddingMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_embedding(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load_embedding(path: &Path) -> Result<EmbeddingMatrix> {
    read_embedding(BufReader::new(File::open(path)?))
}
