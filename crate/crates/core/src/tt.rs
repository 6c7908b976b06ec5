//! Per-vector tensor-train (MPS) compression.
//!
//! A length-`d` embedding is folded into an order-N tensor and split into
//! N cores by a left-to-right sweep of truncated SVDs. Each step gets the
//! absolute error budget `eps / sqrt(N - 1) * ||x||`, so the total error is
//! at most `eps * ||x||` unless a rank cap binds.

use crate::error::{Error, Result};
use crate::matrix::{frobenius, Matrix};
use crate::svd::truncated_svd;
use crate::tensor::Tensor;

/// Inputs to [`tt_svd`]: target shape, per-bond rank caps and the relative
/// accuracy `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressSpec {
    shape: Vec<usize>,
    max_ranks: Vec<usize>,
    epsilon: f64,
}

impl CompressSpec {
    pub fn new(shape: Vec<usize>, max_ranks: Vec<usize>, epsilon: f64) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidShape(format!(
                "mode sizes must be >= 1 and non-empty, got {shape:?}"
            )));
        }
        if max_ranks.len() + 1 != shape.len() {
            return Err(Error::InvalidSpec(format!(
                "order-{} shape needs {} rank caps, got {}",
                shape.len(),
                shape.len() - 1,
                max_ranks.len()
            )));
        }
        if max_ranks.contains(&0) {
            return Err(Error::InvalidSpec("rank caps must be >= 1".into()));
        }
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::InvalidSpec(format!(
                "epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        Ok(Self {
            shape,
            max_ranks,
            epsilon,
        })
    }

    /// Caps every bond at `cap`.
    pub fn uniform(shape: Vec<usize>, cap: usize, epsilon: f64) -> Result<Self> {
        let n = shape.len().saturating_sub(1);
        Self::new(shape, vec![cap; n], epsilon)
    }

    /// Caps set to the structural maximum; never binding.
    pub fn unbounded(shape: Vec<usize>, epsilon: f64) -> Result<Self> {
        let caps = structural_max_ranks(&shape);
        Self::new(shape, caps, epsilon)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn max_ranks(&self) -> &[usize] {
        &self.max_ranks
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dim(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }
}

/// Largest rank each interior bond can take: `min(prod_{j<=k} I_j, prod_{j>k} I_j)`.
pub fn structural_max_ranks(shape: &[usize]) -> Vec<usize> {
    (1..shape.len())
        .map(|k| {
            let left: usize = shape[..k].iter().product();
            let right: usize = shape[k..].iter().product();
            left.min(right)
        })
        .collect()
}

/// One compressed embedding: cores `G_k` of shape `r_{k-1} x I_k x r_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TtVector {
    shape: Vec<usize>,
    ranks: Vec<usize>,
    cores: Vec<Tensor>,
}

impl TtVector {
    /// Assembles a TT vector from raw cores, checking every invariant.
    pub fn new(shape: Vec<usize>, ranks: Vec<usize>, cores: Vec<Tensor>) -> Result<Self> {
        let n = shape.len();
        if n == 0 || shape.contains(&0) {
            return Err(Error::InvalidShape(format!("bad TT shape {shape:?}")));
        }
        if ranks.len() != n + 1 || ranks[0] != 1 || ranks[n] != 1 || ranks.contains(&0) {
            return Err(Error::InvalidSpec(format!(
                "ranks {ranks:?} must have length {} with r_0 = r_N = 1",
                n + 1
            )));
        }
        if cores.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} cores for an order-{n} shape",
                cores.len()
            )));
        }
        for (k, core) in cores.iter().enumerate() {
            let want = [ranks[k], shape[k], ranks[k + 1]];
            if core.shape() != want {
                return Err(Error::ShapeMismatch(format!(
                    "core {k} has shape {:?}, expected {want:?}",
                    core.shape()
                )));
            }
        }
        Ok(Self {
            shape,
            ranks,
            cores,
        })
    }

    /// Builds cores from flat little-endian payloads.
    pub fn from_flat_cores(shape: Vec<usize>, ranks: Vec<usize>, payload: &[f64]) -> Result<Self> {
        if ranks.len() != shape.len() + 1 {
            return Err(Error::InvalidSpec("rank vector length".into()));
        }
        let mut cores = Vec::with_capacity(shape.len());
        let mut at = 0;
        for k in 0..shape.len() {
            let len = ranks[k] * shape[k] * ranks[k + 1];
            let chunk = payload
                .get(at..at + len)
                .ok_or_else(|| Error::ShapeMismatch(format!("payload too short for core {k}")))?;
            cores.push(Tensor::new(
                vec![ranks[k], shape[k], ranks[k + 1]],
                chunk.to_vec(),
            )?);
            at += len;
        }
        if at != payload.len() {
            return Err(Error::ShapeMismatch(format!(
                "payload has {} scalars, cores need {at}",
                payload.len()
            )));
        }
        Self::new(shape, ranks, cores)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn cores(&self) -> &[Tensor] {
        &self.cores
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn source_dim(&self) -> usize {
        self.shape.iter().product()
    }

    /// `sum_k r_{k-1} I_k r_k`.
    pub fn param_count(&self) -> usize {
        param_count_for(&self.shape, &self.ranks)
    }

    /// `d / params - 1`.
    pub fn compression_ratio(&self) -> f64 {
        compression_ratio_tt(self.source_dim(), self.param_count())
    }

    /// Multiply-adds of the left-to-right contraction chain, counted as 2
    /// flops each.
    pub fn reconstruction_flops(&self) -> u64 {
        reconstruction_flops_for(&self.shape, &self.ranks)
    }

    /// Serial matrix products needed to reconstruct: `N - 1`.
    pub fn chain_length(&self) -> usize {
        self.order() - 1
    }

    /// All cores concatenated in order, each little-endian.
    pub fn flat_payload(&self) -> Vec<f64> {
        self.cores
            .iter()
            .flat_map(|c| c.data().iter().copied())
            .collect()
    }

    /// Contracts the chain `G_1 x G_2 x ... x G_N` back into a length-`d`
    /// vector.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.source_dim());
        self.reconstruct_into(&mut out);
        out
    }

    /// Like [`reconstruct`](Self::reconstruct) but appends into `out`.
    pub fn reconstruct_into(&self, out: &mut Vec<f64>) {
        // Running product is a (prod_{j<k} I_j) x r_k column-major matrix;
        // multiplying by core k viewed as r_{k-1} x (I_k r_k) lands in the
        // same layout with one more mode folded into the rows.
        let mut running = self.cores[0].data().to_vec();
        let mut rows = self.shape[0];
        for k in 1..self.order() {
            let r_in = self.ranks[k];
            let width = self.shape[k] * self.ranks[k + 1];
            let core = self.cores[k].data();
            let mut next = vec![0.0; rows * width];
            for j in 0..width {
                let dst = &mut next[j * rows..(j + 1) * rows];
                for a in 0..r_in {
                    let g = core[a + r_in * j];
                    if g == 0.0 {
                        continue;
                    }
                    let src = &running[a * rows..(a + 1) * rows];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += s * g;
                    }
                }
            }
            running = next;
            rows *= self.shape[k];
        }
        out.extend_from_slice(&running);
    }
}

pub fn param_count_for(shape: &[usize], ranks: &[usize]) -> usize {
    shape
        .iter()
        .enumerate()
        .map(|(k, &i)| ranks[k] * i * ranks[k + 1])
        .sum()
}

pub fn compression_ratio_tt(d: usize, params: usize) -> f64 {
    d as f64 / params as f64 - 1.0
}

pub fn reconstruction_flops_for(shape: &[usize], ranks: &[usize]) -> u64 {
    let mut prefix = shape[0] as u64;
    let mut total = 0u64;
    for k in 1..shape.len() {
        total += 2 * prefix * ranks[k] as u64 * shape[k] as u64 * ranks[k + 1] as u64;
        prefix *= shape[k] as u64;
    }
    total
}

/// TT-SVD of a single vector.
///
/// Order-1 shapes skip decomposition and hold `x` in one `1 x d x 1` core.
/// A zero vector yields zero cores with every rank 1.
pub fn tt_svd(x: &[f64], spec: &CompressSpec) -> Result<TtVector> {
    let shape = spec.shape().to_vec();
    let d = spec.dim();
    if x.len() != d {
        return Err(Error::ShapeMismatch(format!(
            "vector has length {}, shape {shape:?} needs {d}",
            x.len()
        )));
    }
    let n = shape.len();
    if n == 1 {
        let core = Tensor::new(vec![1, d, 1], x.to_vec())?;
        return TtVector::new(shape, vec![1, 1], vec![core]);
    }

    let norm = frobenius(x);
    if norm == 0.0 {
        let cores = shape
            .iter()
            .map(|&i| Tensor::zeros(vec![1, i, 1]))
            .collect::<Result<Vec<_>>>()?;
        return TtVector::new(shape, vec![1; n + 1], cores);
    }

    let delta = spec.epsilon() / ((n - 1) as f64).sqrt() * norm;
    let mut ranks = Vec::with_capacity(n + 1);
    ranks.push(1);
    let mut cores = Vec::with_capacity(n);
    let mut carry = x.to_vec();
    for k in 0..n - 1 {
        let r_prev = ranks[k];
        let rows = r_prev * shape[k];
        let cols = carry.len() / rows;
        let z = Matrix::from_col_major(rows, cols, carry)?;
        let t = truncated_svd(&z, delta, spec.max_ranks()[k])?;
        let r = t.rank;
        cores.push(Tensor::new(
            vec![r_prev, shape[k], r],
            t.u.as_slice().to_vec(),
        )?);
        carry = t.s_vt().into_vec();
        ranks.push(r);
    }
    let r_last = ranks[n - 1];
    cores.push(Tensor::new(vec![r_last, shape[n - 1], 1], carry)?);
    ranks.push(1);
    TtVector::new(shape, ranks, cores)
}
