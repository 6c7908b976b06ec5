//! EMB1: dense embedding tables.
//!
//! ```text
//! "EMB1" | version u16 | V u64 | d u32 | V*d binary32, row-major | CRC32
//! ```
//!
//! All integers and floats little-endian; the CRC covers every byte before it.

use std::fs;
use std::path::Path;

use super::{seal, unseal, write_atomic, ByteReader};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const VERSION: u16 = 1;
/// Magic, version, V and d.
pub const HEADER_LEN: usize = 4 + 2 + 8 + 4;

/// A `V x d` embedding table, row-major, held in 64-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTable {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl DenseTable {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(dim) != Some(data.len()) {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{dim} table needs {} values, got {}",
                rows * dim,
                data.len()
            )));
        }
        Ok(Self { rows, dim, data })
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has length {}, expected {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        self.data.chunks_exact(self.dim.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.rows, self.dim, |i, j| self.data[i * self.dim + j])
    }

    /// Rounds every value to binary32, as a store round trip would.
    pub fn narrowed(&self) -> Self {
        Self {
            rows: self.rows,
            dim: self.dim,
            data: self.data.iter().map(|&v| v as f32 as f64).collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(HEADER_LEN + 4 * self.data.len() + 4);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.rows as u64).to_le_bytes());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for &v in &self.data {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        seal(&mut buf);
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let body = unseal(bytes, "EMB1")?;
        let mut r = ByteReader::new(body, "EMB1");
        r.expect_magic(MAGIC)?;
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let rows = usize::try_from(r.u64()?)
            .map_err(|_| Error::CorruptFile("EMB1: row count overflows".into()))?;
        let dim = r.u32()? as usize;
        let count = rows
            .checked_mul(dim)
            .filter(|c| c.checked_mul(4) == Some(r.remaining()))
            .ok_or_else(|| {
                Error::CorruptFile(format!(
                    "EMB1: {rows}x{dim} header disagrees with {} payload bytes",
                    r.remaining()
                ))
            })?;
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(r.f32()? as f64);
        }
        Self::new(rows, dim, data)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_by_eight_byte_layout() {
        let t = DenseTable::new(4, 8, (0..32).map(|i| i as f64 * 0.5).collect()).unwrap();
        let bytes = t.encode();
        assert_eq!(bytes.len(), HEADER_LEN + 128 + 4);
        assert_eq!(&bytes[..4], b"EMB1");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u64::from_le_bytes(bytes[6..14].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(bytes[14..18].try_into().unwrap()), 8);
        // row 0, col 1 = 0.5
        assert_eq!(f32::from_le_bytes(bytes[22..26].try_into().unwrap()), 0.5);
        assert_eq!(DenseTable::decode(&bytes).unwrap(), t);
    }

    #[test]
    fn decode_rejects_damage() {
        let t = DenseTable::new(2, 3, vec![1.0; 6]).unwrap();
        let bytes = t.encode();
        assert!(matches!(
            DenseTable::decode(&bytes[..bytes.len() - 1]),
            Err(Error::CorruptFile(_))
        ));
        let mut v = bytes.clone();
        v[4] = 9;
        // re-seal so only the version is wrong
        v.truncate(v.len() - 4);
        seal(&mut v);
        assert!(matches!(
            DenseTable::decode(&v),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
    }

    #[test]
    fn narrowing_matches_file_roundtrip() {
        let t = DenseTable::new(1, 3, vec![0.1, 1.0 / 3.0, -2.5]).unwrap();
        assert_eq!(DenseTable::decode(&t.encode()).unwrap(), t.narrowed());
    }

    #[test]
    fn empty_table() {
        let t = DenseTable::zeros(0, 8);
        assert_eq!(t.iter_rows().count(), 0);
        assert_eq!(DenseTable::decode(&t.encode()).unwrap(), t);
    }
}
