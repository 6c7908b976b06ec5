//! Dense order-N tensors with little-endian (first index fastest) layout.
//!
//! Entry `(i_1, ..., i_N)` (1-based) lives at flat position
//! `sum_k (i_k - 1) * prod_{p<k} I_p`. The API is 0-based, so the same
//! entry is `offset(&[i_1 - 1, ..., i_N - 1])`.
//!
//! Values are immutable after construction and every operation returns a
//! new tensor.

use crate::error::{Error, Result};
use crate::matrix::{frobenius, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::InvalidShape(
            "tensor order must be at least 1".into(),
        ));
    }
    if let Some(pos) = shape.iter().position(|&s| s == 0) {
        return Err(Error::InvalidShape(format!("mode {pos} has size 0")));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &s| acc.checked_mul(s))
        .ok_or_else(|| Error::InvalidShape(format!("{shape:?} overflows")))
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if len != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} holds {len} entries, data has {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = check_shape(&shape)?;
        Ok(Self {
            shape,
            data: vec![0.0; len],
        })
    }

    /// Folds `vector` into a tensor of the given shape.
    pub fn tensorize(vector: &[f64], shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != vector.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot fold a length-{} vector into {shape:?} (product {len})",
                vector.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: vector.to_vec(),
        })
    }

    /// Unfolds back into a vector; the inverse of [`Tensor::tensorize`].
    pub fn vectorize(&self) -> Vec<f64> {
        self.data.clone()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Flat position of a 0-based multi-index.
    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index order mismatch");
        let mut stride = 1;
        let mut pos = 0;
        for (&i, &n) in index.iter().zip(&self.shape) {
            assert!(i < n, "index {i} out of bounds for mode of size {n}");
            pos += i * stride;
            stride *= n;
        }
        pos
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    /// Same data under a new shape with equal product.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::tensorize(&self.data, shape)
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.data)
    }

    /// Mode-`mode` unfolding (0-based mode). Row `i` holds the fibers with
    /// `i_mode = i`; columns enumerate the remaining modes little-endian.
    pub fn matricize(&self, mode: usize) -> Result<Matrix> {
        if mode >= self.order() {
            return Err(Error::ModeOutOfRange {
                mode,
                order: self.order(),
            });
        }
        let before: usize = self.shape[..mode].iter().product();
        let size = self.shape[mode];
        let after: usize = self.shape[mode + 1..].iter().product();
        let mut out = Matrix::zeros(size, before * after);
        for b in 0..after {
            for i in 0..size {
                let base = before * (i + size * b);
                for a in 0..before {
                    out.set(i, a + before * b, self.data[base + a]);
                }
            }
        }
        Ok(out)
    }

    /// Contracts mode `k` of `self` with mode `p` of `other` (0-based).
    ///
    /// The result carries the remaining modes of `self` followed by the
    /// remaining modes of `other`. A full contraction of two vectors has
    /// no modes left and is returned with shape `[1]`.
    pub fn contract(&self, other: &Tensor, k: usize, p: usize) -> Result<Tensor> {
        let left = self.matricize(k)?;
        let right = other.matricize(p)?;
        if left.rows() != right.rows() {
            return Err(Error::DimensionMismatch {
                left: left.rows(),
                right: right.rows(),
            });
        }
        let product = left.transpose().matmul(&right)?;
        let mut shape: Vec<usize> = self
            .shape
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != k)
            .map(|(_, &s)| s)
            .collect();
        shape.extend(
            other
                .shape
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != p)
                .map(|(_, &s)| s),
        );
        if shape.is_empty() {
            shape.push(1);
        }
        Tensor::new(shape, product.into_vec())
    }
}
