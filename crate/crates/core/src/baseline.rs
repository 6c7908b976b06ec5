//! Whole-table rank-`k` factorization, the comparison point for TT.
//!
//! `E ~= A B` with `A` of size `V x k` and `B` of size `k x d`. The singular
//! values are folded into `B`, so a row lookup is one vector-matrix product.
//! There is no incremental path: a new token means refactorizing the table.

use crate::error::{Error, Result};
use crate::format::{seal, unseal, ByteReader, DenseTable};
use crate::matrix::Matrix;
use crate::svd::svd;

pub const LRT1_MAGIC: &[u8; 4] = b"LRT1";
pub const LRT1_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LowRankTable {
    row_factors: Matrix,
    col_factors: Matrix,
}

/// Best rank-`k` approximation of `table` in the Frobenius norm.
pub fn compress_table(table: &DenseTable, k: usize) -> Result<LowRankTable> {
    let max = table.rows().min(table.dim());
    if k == 0 || k > max {
        return Err(Error::RankOutOfRange { k, max });
    }
    let dec = svd(&table.to_matrix())?;
    let row_factors = dec.u.truncate_cols(k);
    let col_factors = Matrix::from_fn(k, table.dim(), |a, j| dec.s[a] * dec.v.get(j, a));
    Ok(LowRankTable {
        row_factors,
        col_factors,
    })
}

impl LowRankTable {
    pub fn new(row_factors: Matrix, col_factors: Matrix) -> Result<Self> {
        if row_factors.cols() != col_factors.rows() {
            return Err(Error::DimensionMismatch {
                left: row_factors.cols(),
                right: col_factors.rows(),
            });
        }
        Ok(Self {
            row_factors,
            col_factors,
        })
    }

    pub fn rank(&self) -> usize {
        self.row_factors.cols()
    }

    pub fn rows(&self) -> usize {
        self.row_factors.rows()
    }

    pub fn dim(&self) -> usize {
        self.col_factors.cols()
    }

    pub fn row_factors(&self) -> &Matrix {
        &self.row_factors
    }

    pub fn col_factors(&self) -> &Matrix {
        &self.col_factors
    }

    /// `k (V + d)`.
    pub fn param_count(&self) -> usize {
        self.rank() * (self.rows() + self.dim())
    }

    /// `2dk - d`: `d` dot products of length `k`.
    pub fn lookup_flops(&self) -> u64 {
        let (d, k) = (self.dim() as u64, self.rank() as u64);
        2 * d * k - d
    }

    pub fn lookup_row(&self, i: usize) -> Result<Vec<f64>> {
        if i >= self.rows() {
            return Err(Error::TokenOutOfRange(i));
        }
        let k = self.rank();
        let a: Vec<f64> = (0..k).map(|c| self.row_factors.get(i, c)).collect();
        Ok((0..self.dim())
            .map(|j| {
                let col = self.col_factors.column(j);
                a.iter().zip(col).map(|(x, y)| x * y).sum()
            })
            .collect())
    }

    pub fn reconstruct_dense(&self) -> DenseTable {
        let prod = self
            .row_factors
            .matmul(&self.col_factors)
            .expect("inner dimensions agree by construction");
        DenseTable::new(self.rows(), self.dim(), prod.transpose().into_vec())
            .expect("product is V x d")
    }

    /// `"LRT1" | version u16 | V u64 | d u32 | k u32 | A row-major | B row-major | CRC32`,
    /// factors in binary32.
    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(22 + 4 * self.param_count() + 4);
        buf.extend_from_slice(LRT1_MAGIC);
        buf.extend_from_slice(&LRT1_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.rows() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.rank() as u32).to_le_bytes());
        for m in [&self.row_factors, &self.col_factors] {
            for i in 0..m.rows() {
                for j in 0..m.cols() {
                    buf.extend_from_slice(&(m.get(i, j) as f32).to_le_bytes());
                }
            }
        }
        seal(&mut buf);
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let body = unseal(bytes, "LRT1")?;
        let mut r = ByteReader::new(body, "LRT1");
        r.expect_magic(LRT1_MAGIC)?;
        let version = r.u16()?;
        if version != LRT1_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: LRT1_VERSION,
            });
        }
        let rows = usize::try_from(r.u64()?)
            .map_err(|_| Error::CorruptFile("LRT1: row count overflows".into()))?;
        let dim = r.u32()? as usize;
        let k = r.u32()? as usize;
        let expected = k
            .checked_mul(rows.saturating_add(dim))
            .and_then(|p| p.checked_mul(4));
        if expected != Some(r.remaining()) {
            return Err(Error::CorruptFile(format!(
                "LRT1: {rows}x{dim} rank {k} header disagrees with {} payload bytes",
                r.remaining()
            )));
        }
        let mut read = |m: usize, n: usize| -> Result<Matrix> {
            let mut vals = Vec::with_capacity(m * n);
            for _ in 0..m * n {
                vals.push(r.f32()? as f64);
            }
            Matrix::from_row_major(m, n, &vals)
        };
        let a = read(rows, k)?;
        let b = read(k, dim)?;
        Self::new(a, b)
    }
}
