//! Choosing a tensor shape for a given embedding dimension.
//!
//! Storage for a shape `(I_1..I_N)` with interior rank cap `r` is
//! `sum_k r_{k-1} I_k r_k`, boundary ranks fixed at 1 and every interior
//! rank clipped to its structural maximum. [`optimal_shapes`] searches all
//! ordered factorizations for the minimum and returns every shape that
//! attains it: ties are common (`(4,4)` and `(2,2,2,2)` both store 8 scalars
//! for `d = 16, r = 1`).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tt::{compression_ratio_tt, param_count_for, structural_max_ranks, CompressSpec};

/// Default order limit for factorization searches. Enough for every
/// embedding width below 2^16.
pub const DEFAULT_MAX_ORDER: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct ShapePlan {
    pub shape: Vec<usize>,
    /// Interior rank caps after clipping to the structural maximum.
    pub rank_caps: Vec<usize>,
    pub predicted_params: usize,
    pub predicted_eta: f64,
    pub epsilon: f64,
}

impl ShapePlan {
    pub fn dim(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn compress_spec(&self) -> Result<CompressSpec> {
        CompressSpec::new(self.shape.clone(), self.rank_caps.clone(), self.epsilon)
    }
}

impl fmt::Display for ShapePlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} params {} eta {:?}",
            join(&self.shape, ","),
            self.predicted_params,
            self.predicted_eta
        )
    }
}

pub(crate) fn join(values: &[usize], sep: &str) -> String {
    values
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(sep)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ShapePolicy {
    /// Full prime factorization, ascending.
    MaxCompression,
    /// Most balanced factorization with exactly this many modes.
    TargetOrder(usize),
    Explicit(Vec<usize>),
}

impl FromStr for ShapePolicy {
    type Err = Error;

    /// Accepts `max`, `order:N` and `shape:a,b,c` (or a bare `a,b,c`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "max" || s == "max-compression" {
            return Ok(ShapePolicy::MaxCompression);
        }
        if let Some(n) = s.strip_prefix("order:") {
            let n = n
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad order in policy {s:?}")))?;
            return Ok(ShapePolicy::TargetOrder(n));
        }
        let list = s.strip_prefix("shape:").unwrap_or(s);
        parse_shape(list).map(ShapePolicy::Explicit)
    }
}

/// Parses `8,8,12` (also accepts `x` as a separator).
pub fn parse_shape(s: &str) -> Result<Vec<usize>> {
    let parts: Vec<&str> = s
        .split([',', 'x'])
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .collect();
    if parts.is_empty() {
        return Err(Error::Parse(format!("empty shape {s:?}")));
    }
    parts
        .iter()
        .map(|p| {
            p.parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad mode size {p:?} in {s:?}")))
        })
        .collect()
}

/// Every ordered factorization of `d` into factors >= 2 with at most
/// `max_order` factors, in lexicographic order. `(d)` itself is included.
pub fn enumerate_factorizations(d: usize, max_order: usize) -> Vec<Vec<usize>> {
    if d < 2 {
        return vec![vec![d.max(1)]];
    }
    let mut out = Vec::new();
    let mut prefix = Vec::new();
    descend(d, max_order.max(1), None, &mut prefix, &mut out);
    out
}

/// `exact`: when set, only factorizations of exactly that length.
fn descend(
    rest: usize,
    budget: usize,
    exact: Option<usize>,
    prefix: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if rest == 1 {
        if exact.is_none_or(|n| prefix.len() == n) {
            out.push(prefix.clone());
        }
        return;
    }
    if budget == 0 {
        return;
    }
    for f in 2..=rest {
        if !rest.is_multiple_of(f) {
            continue;
        }
        prefix.push(f);
        descend(rest / f, budget - 1, exact, prefix, out);
        prefix.pop();
    }
}

/// Factorizations of `d` with exactly `order` factors >= 2.
pub fn factorizations_of_order(d: usize, order: usize) -> Vec<Vec<usize>> {
    if d < 2 || order == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    descend(d, order, Some(order), &mut Vec::new(), &mut out);
    out
}

/// Prime factors of `d` in ascending order, with multiplicity.
pub fn prime_factors(mut d: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= d {
        while d.is_multiple_of(p) {
            out.push(p);
            d /= p;
        }
        p += 1;
    }
    if d > 1 {
        out.push(d);
    }
    out
}

/// Interior ranks: each cap clipped to its structural maximum.
pub fn clipped_ranks(shape: &[usize], caps: &[usize]) -> Vec<usize> {
    structural_max_ranks(shape)
        .iter()
        .zip(caps)
        .map(|(&m, &c)| m.min(c))
        .collect()
}

fn full_ranks(interior: &[usize]) -> Vec<usize> {
    let mut r = Vec::with_capacity(interior.len() + 2);
    r.push(1);
    r.extend_from_slice(interior);
    r.push(1);
    r
}

/// Predicted parameter count of `shape` under interior caps `caps`.
pub fn storage_for(shape: &[usize], caps: &[usize]) -> usize {
    let interior = clipped_ranks(shape, caps);
    param_count_for(shape, &full_ranks(&interior))
}

pub fn uniform_storage(shape: &[usize], rank: usize) -> usize {
    storage_for(shape, &vec![rank; shape.len().saturating_sub(1)])
}

/// Storage of a uniform shape `I^N` at uniform rank `r` in closed form,
/// `r I (2 + (N - 2) r)`. Valid when `r` does not exceed any structural
/// maximum, which holds whenever `r <= I`.
pub fn uniform_closed_form(mode: usize, order: usize, rank: usize) -> usize {
    match order {
        0 => 0,
        1 => mode,
        n => rank * mode * (2 + (n - 2) * rank),
    }
}

/// Minimum storage over all factorizations of `d` at uniform rank `rank`,
/// and the full set of shapes attaining it.
pub fn optimal_shapes(d: usize, rank: usize) -> (usize, Vec<Vec<usize>>) {
    optimal_shapes_with_order(d, rank, DEFAULT_MAX_ORDER)
}

pub fn optimal_shapes_with_order(
    d: usize,
    rank: usize,
    max_order: usize,
) -> (usize, Vec<Vec<usize>>) {
    let mut best = usize::MAX;
    let mut winners = Vec::new();
    for shape in enumerate_factorizations(d, max_order) {
        let s = uniform_storage(&shape, rank);
        if s < best {
            best = s;
            winners.clear();
        }
        if s == best {
            winners.push(shape);
        }
    }
    (best, winners)
}

/// Most balanced factorization of `d` into `order` factors: smallest
/// maximum factor, ties broken lexicographically.
pub fn balanced_factorization(d: usize, order: usize) -> Result<Vec<usize>> {
    if order == 1 {
        return Ok(vec![d]);
    }
    factorizations_of_order(d, order)
        .into_iter()
        .min_by(|a, b| {
            let ma = a.iter().max();
            let mb = b.iter().max();
            ma.cmp(&mb).then_with(|| a.cmp(b))
        })
        .ok_or(Error::InfeasibleOrder { d, order })
}

pub fn plan(d: usize, policy: &ShapePolicy, rank_cap: usize, epsilon: f64) -> Result<ShapePlan> {
    if d == 0 {
        return Err(Error::InvalidShape(
            "embedding dimension must be >= 1".into(),
        ));
    }
    if rank_cap == 0 {
        return Err(Error::InvalidSpec("rank cap must be >= 1".into()));
    }
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::InvalidSpec(format!(
            "epsilon must be finite and >= 0, got {epsilon}"
        )));
    }
    let shape = if d == 1 {
        vec![1]
    } else {
        match policy {
            ShapePolicy::MaxCompression => prime_factors(d),
            ShapePolicy::TargetOrder(0) => return Err(Error::InfeasibleOrder { d, order: 0 }),
            ShapePolicy::TargetOrder(n) => balanced_factorization(d, *n)?,
            ShapePolicy::Explicit(shape) => {
                let product: usize = shape.iter().product();
                if shape.is_empty() || product != d {
                    return Err(Error::ShapeMismatch(format!(
                        "shape {shape:?} has product {product}, expected {d}"
                    )));
                }
                if shape.iter().any(|&i| i < 2) {
                    return Err(Error::InvalidShape(format!(
                        "mode sizes must be >= 2, got {shape:?}"
                    )));
                }
                shape.clone()
            }
        }
    };
    let caps = clipped_ranks(&shape, &vec![rank_cap; shape.len().saturating_sub(1)]);
    let params = param_count_for(&shape, &full_ranks(&caps));
    Ok(ShapePlan {
        predicted_eta: compression_ratio_tt(d, params),
        shape,
        rank_caps: caps,
        predicted_params: params,
        epsilon,
    })
}
