//! `MME1` embedding files: magic, `u32` rows, `u32` cols (little-endian),
//! then `rows·cols` little-endian `f64` values in row-major order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numkernel::Matrix;

use super::EmbeddingSequence;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"MME1";

pub fn encode_matrix(m: &Matrix, out: &mut Vec<u8>) {
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Byte cursor that reports offsets relative to the start of the buffer.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub(crate) fn fail(&self, message: impl Into<String>) -> Error {
        Error::Format { offset: self.offset(), message: message.into() }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.fail(format!(
                "truncated {what}: need {n} bytes, {} remain",
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let start = self.pos;
        let got = self.take(4, "magic")?;
        if got != expected {
            return Err(Error::Format {
                offset: start as u64,
                message: format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(expected)
                ),
            });
        }
        Ok(())
    }

    pub(crate) fn matrix(&mut self) -> Result<Matrix> {
        self.magic(EMBEDDING_MAGIC)?;
        let rows = self.u32("row count")? as usize;
        let cols = self.u32("column count")? as usize;
        let count = rows
            .checked_mul(cols)
            .filter(|c| c.checked_mul(8).is_some())
            .ok_or_else(|| self.fail(format!("{rows}x{cols} overflows")))?;
        let remaining = self.buf.len() - self.pos;
        if remaining < count * 8 {
            return Err(self.fail(format!(
                "header declares {rows}x{cols} ({} bytes of values) but only {remaining} bytes remain",
                count * 8
            )));
        }
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            let at = self.pos;
            let b = self.take(8, "value")?;
            let v = f64::from_le_bytes(b.try_into().expect("8-byte slice"));
            if !v.is_finite() {
                return Err(Error::Format { offset: at as u64, message: format!("non-finite value {v}") });
            }
            data.push(v);
        }
        Matrix::from_vec(rows, cols, data)
    }
}

/// Parses a single-matrix file image. Trailing bytes are rejected.
pub fn decode_matrix(bytes: &[u8]) -> Result<Matrix> {
    let mut r = Reader::new(bytes);
    let m = r.matrix()?;
    if !r.at_end() {
        return Err(r.fail("trailing bytes after matrix"));
    }
    Ok(m)
}

pub fn save_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + m.len() * 8);
    encode_matrix(m, &mut buf);
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    decode_matrix(&fs::read(path)?)
}

pub fn save_embeddings(path: impl AsRef<Path>, seq: &EmbeddingSequence) -> Result<()> {
    save_matrix(path, seq.as_matrix())
}

/// Loads an embedding sequence; empty sequences are a format error.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSequence> {
    let m = load_matrix(path)?;
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::Format { offset: 4, message: format!("empty {}x{} sequence", m.rows(), m.cols()) });
    }
    EmbeddingSequence::new(m)
}
