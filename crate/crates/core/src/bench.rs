//! Host-side latency measurements for compression, reconstruction and
//! per-text lookup.
//!
//! Timings depend on the machine and carry no guarantees. The flop and
//! parameter columns are exact and are what the tests check.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::baseline::compress_table;
use crate::error::{Error, Result};
use crate::format::DenseTable;
use crate::matrix::frobenius;
use crate::planner::join;
use crate::tt::{tt_svd, CompressSpec};
use crate::vocab::CompressedVocab;

pub const DEFAULT_REPS: usize = 30;
pub const DEFAULT_WARMUP: usize = 3;
/// Tokens per text in the lookup benchmark.
pub const TEXT_LENGTH: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchConfig {
    pub reps: usize,
    pub warmup: usize,
    pub seed: u64,
    /// Token count per repetition for the per-token benchmarks.
    pub tokens: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            reps: DEFAULT_REPS,
            warmup: DEFAULT_WARMUP,
            seed: 0,
            tokens: 64,
        }
    }
}

impl BenchConfig {
    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidSpec("reps must be at least 1".into()));
        }
        if self.tokens == 0 {
            return Err(Error::InvalidSpec("tokens must be at least 1".into()));
        }
        Ok(())
    }
}

/// Timing summary, in milliseconds per token (per text for `lookup_text`).
#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub op: String,
    pub shape: Vec<usize>,
    /// Largest rank seen on each bond over the measured entries.
    pub ranks: Vec<usize>,
    pub epsilon: f64,
    pub dim: usize,
    pub vocab: usize,
    pub length: usize,
    pub tokens: usize,
    pub reps: usize,
    pub mean: f64,
    pub std: f64,
    pub median_of_means: f64,
    pub flops_per_token: f64,
}

pub const CSV_HEADER: &str = "op,shape,ranks,eps,d,V,l,reps,mean,std,flops_per_token";

impl BenchResult {
    pub fn fingerprint(&self) -> String {
        format!(
            "shape={} ranks={} eps={} d={} V={}",
            join(&self.shape, "x"),
            join(&self.ranks, "-"),
            self.epsilon,
            self.dim,
            self.vocab
        )
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.op,
            join(&self.shape, "x"),
            join(&self.ranks, "-"),
            self.epsilon,
            self.dim,
            self.vocab,
            self.length,
            self.reps,
            self.mean,
            self.std,
            self.flops_per_token
        )
    }
}

impl fmt::Display for BenchResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let unit = if self.op == "lookup_text" {
            "ms/text"
        } else {
            "ms/token"
        };
        write!(
            f,
            "{:<20} {:>10.5} +- {:<10.5} {unit}  mom {:.5}  flops/token {:.1}  [{}]",
            self.op,
            self.mean,
            self.std,
            self.median_of_means,
            self.flops_per_token,
            self.fingerprint()
        )
    }
}

/// Mean, sample standard deviation and median of group means.
pub fn summarize(samples: &[f64]) -> (f64, f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (0.0, 0.0, 0.0);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let groups = n.min(5);
    let size = n.div_ceil(groups);
    let mut means: Vec<f64> = samples
        .chunks(size)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let m = means.len();
    let median = if m % 2 == 1 {
        means[m / 2]
    } else {
        (means[m / 2 - 1] + means[m / 2]) / 2.0
    };
    (mean, std, median)
}

fn time_reps(
    cfg: &BenchConfig,
    per: usize,
    mut work: impl FnMut() -> Result<()>,
) -> Result<Vec<f64>> {
    for _ in 0..cfg.warmup {
        work()?;
    }
    let mut samples = Vec::with_capacity(cfg.reps);
    for _ in 0..cfg.reps {
        let start = Instant::now();
        work()?;
        samples.push(start.elapsed().as_secs_f64() * 1e3 / per as f64);
    }
    Ok(samples)
}

/// A `V x d` table of standard normal entries.
pub fn gaussian_table(rows: usize, dim: usize, seed: u64) -> DenseTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    DenseTable::new(rows, dim, data).expect("size matches")
}

/// `count` ids drawn with replacement from the vocabulary.
pub fn sample_ids(vocab: &CompressedVocab, count: usize, seed: u64) -> Vec<u64> {
    let ids: Vec<u64> = vocab.ids().collect();
    if ids.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| ids[rng.random_range(0..ids.len())])
        .collect()
}

fn max_ranks<'a>(order: usize, ranks: impl Iterator<Item = &'a [usize]>) -> Vec<usize> {
    let mut out = vec![1; order + 1];
    for r in ranks {
        for (o, &x) in out.iter_mut().zip(r) {
            *o = (*o).max(x);
        }
    }
    out
}

fn sample_rows(table: &DenseTable, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| rng.random_range(0..table.rows()))
        .collect()
}

/// Compression latency per token over a seeded sample of rows.
pub fn bench_compress(
    table: &DenseTable,
    spec: &CompressSpec,
    cfg: &BenchConfig,
) -> Result<BenchResult> {
    cfg.validate()?;
    if table.rows() == 0 {
        return Err(Error::InvalidSpec("cannot benchmark an empty table".into()));
    }
    let rows = sample_rows(table, cfg.tokens, cfg.seed);
    let produced: Vec<_> = rows
        .iter()
        .map(|&i| tt_svd(table.row(i), spec))
        .collect::<Result<_>>()?;
    let samples = time_reps(cfg, rows.len(), || {
        for &i in &rows {
            std::hint::black_box(tt_svd(table.row(i), spec)?);
        }
        Ok(())
    })?;
    let flops = produced
        .iter()
        .map(|t| t.reconstruction_flops() as f64)
        .sum::<f64>()
        / produced.len() as f64;
    let (mean, std, mom) = summarize(&samples);
    Ok(BenchResult {
        op: "compress".into(),
        shape: spec.shape().to_vec(),
        ranks: max_ranks(spec.order(), produced.iter().map(|t| t.ranks())),
        epsilon: spec.epsilon(),
        dim: spec.dim(),
        vocab: table.rows(),
        length: 0,
        tokens: rows.len(),
        reps: cfg.reps,
        mean,
        std,
        median_of_means: mom,
        flops_per_token: flops,
    })
}

/// Whole-table compression on the rayon pool, per token.
pub fn bench_compress_parallel(
    table: &DenseTable,
    spec: &CompressSpec,
    cfg: &BenchConfig,
) -> Result<BenchResult> {
    cfg.validate()?;
    if table.rows() == 0 {
        return Err(Error::InvalidSpec("cannot benchmark an empty table".into()));
    }
    let vocab = CompressedVocab::build_parallel(table, spec)?;
    let samples = time_reps(cfg, table.rows(), || {
        std::hint::black_box(CompressedVocab::build_parallel(table, spec)?);
        Ok(())
    })?;
    let (mean, std, mom) = summarize(&samples);
    Ok(BenchResult {
        op: "compress_parallel".into(),
        shape: spec.shape().to_vec(),
        ranks: max_ranks(spec.order(), vocab.iter().map(|(_, t)| t.ranks())),
        epsilon: spec.epsilon(),
        dim: spec.dim(),
        vocab: table.rows(),
        length: 0,
        tokens: table.rows(),
        reps: cfg.reps,
        mean,
        std,
        median_of_means: mom,
        flops_per_token: mean_flops(&vocab, vocab.ids()),
    })
}

fn mean_flops(vocab: &CompressedVocab, ids: impl Iterator<Item = u64>) -> f64 {
    let (mut total, mut n) = (0.0, 0usize);
    for id in ids {
        if let Some(tt) = vocab.get(id) {
            total += tt.reconstruction_flops() as f64;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

fn vocab_result(op: &str, vocab: &CompressedVocab, ids: &[u64], length: usize) -> BenchResult {
    BenchResult {
        op: op.into(),
        shape: vocab.shape().to_vec(),
        ranks: max_ranks(
            vocab.shape().len(),
            ids.iter()
                .filter_map(|&id| vocab.get(id))
                .map(|t| t.ranks()),
        ),
        epsilon: vocab.epsilon(),
        dim: vocab.dim(),
        vocab: vocab.len(),
        length,
        tokens: ids.len(),
        reps: 0,
        mean: 0.0,
        std: 0.0,
        median_of_means: 0.0,
        flops_per_token: mean_flops(vocab, ids.iter().copied()),
    }
}

/// Reconstruction latency per token for the given ids.
pub fn bench_reconstruct(
    vocab: &CompressedVocab,
    ids: &[u64],
    cfg: &BenchConfig,
) -> Result<BenchResult> {
    cfg.validate()?;
    if ids.is_empty() {
        return Err(Error::InvalidSpec("no token ids to reconstruct".into()));
    }
    let samples = time_reps(cfg, ids.len(), || {
        for &id in ids {
            std::hint::black_box(vocab.lookup(id)?);
        }
        Ok(())
    })?;
    let (mean, std, mom) = summarize(&samples);
    Ok(BenchResult {
        reps: cfg.reps,
        mean,
        std,
        median_of_means: mom,
        ..vocab_result("reconstruct", vocab, ids, 0)
    })
}

/// Latency of turning one `l`-token text into its `l x d` input block.
pub fn bench_lookup_text(
    vocab: &CompressedVocab,
    length: usize,
    cfg: &BenchConfig,
) -> Result<BenchResult> {
    cfg.validate()?;
    let ids = sample_ids(vocab, length, cfg.seed);
    if ids.is_empty() {
        return Err(Error::InvalidSpec(
            "empty vocabulary or zero-length text".into(),
        ));
    }
    let samples = time_reps(cfg, 1, || {
        std::hint::black_box(vocab.lookup_batch(&ids)?);
        Ok(())
    })?;
    let (mean, std, mom) = summarize(&samples);
    Ok(BenchResult {
        reps: cfg.reps,
        mean,
        std,
        median_of_means: mom,
        ..vocab_result("lookup_text", vocab, &ids, length)
    })
}

/// Per-row relative reconstruction error of TT and of a whole-table
/// factorization with about the same parameter count.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorComparison {
    pub tt_params: usize,
    pub svd_rank: usize,
    pub svd_params: usize,
    pub tt_mean_rel_error: f64,
    pub svd_mean_rel_error: f64,
}

/// Largest `k` with `k (V + d) <= params`, at least 1.
pub fn matched_rank(rows: usize, dim: usize, params: usize) -> usize {
    (params / (rows + dim)).clamp(1, rows.min(dim).max(1))
}

pub fn compare_errors(table: &DenseTable, spec: &CompressSpec) -> Result<ErrorComparison> {
    let vocab = CompressedVocab::build(table, spec)?;
    let k = matched_rank(table.rows(), table.dim(), vocab.total_params());
    let lr = compress_table(table, k)?;
    let rel = |x: &[f64], y: &[f64]| {
        let n = frobenius(x);
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        if n > 0.0 {
            frobenius(&diff) / n
        } else {
            frobenius(&diff)
        }
    };
    let (mut tt_err, mut svd_err) = (0.0, 0.0);
    for (i, row) in table.iter_rows().enumerate() {
        tt_err += rel(row, &vocab.lookup(i as u64)?);
        svd_err += rel(row, &lr.lookup_row(i)?);
    }
    let v = table.rows().max(1) as f64;
    Ok(ErrorComparison {
        tt_params: vocab.total_params(),
        svd_rank: k,
        svd_params: lr.param_count(),
        tt_mean_rel_error: tt_err / v,
        svd_mean_rel_error: svd_err / v,
    })
}

/// Published latencies, for context next to host numbers. They were taken
/// on other hardware and are not comparable.
pub const REFERENCE_NOTE: &str = "\
reference only, other hardware, not comparable with the host numbers above
ms/token            d     compress(ppl_alpha) compress(phi_max) reconstruct(ppl_alpha) reconstruct(phi_max)
server              768   0.627               1.429             0.117                  0.238
server              1024  0.452               1.512             0.114                  0.261
raspberry-pi-5      768   0.760               1.948             0.330                  0.468
raspberry-pi-5      1024  0.612               2.148             0.364                  0.614
s/text, l=50        original    ppl_alpha   phi_max
distilgpt2          0.19+-0.02  0.36+-0.19  0.19+-0.03
gpt-2               0.50+-0.19  0.50+-0.16  0.71+-0.38
gpt-2-m             1.23+-0.12  1.26+-0.22  1.55+-0.36
gpt-2-l             3.01+-0.47  3.01+-0.29  3.52+-0.44";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::factorizations_of_order;
    use crate::tt::TtVector;

    fn quick() -> BenchConfig {
        BenchConfig {
            reps: 3,
            warmup: 1,
            seed: 7,
            tokens: 8,
        }
    }

    #[test]
    fn flops_independent_of_timing() {
        let spec = CompressSpec::uniform(vec![3, 3, 3], 1, 0.0).unwrap();
        let table = gaussian_table(10, 27, 1);
        let vocab = CompressedVocab::build(&table, &spec).unwrap();
        let r = bench_reconstruct(&vocab, &[0, 1, 2], &quick()).unwrap();
        assert_eq!(r.flops_per_token, 72.0);
        assert_eq!(r.ranks, vec![1, 1, 1, 1]);
        let c = bench_compress(&table, &spec, &quick()).unwrap();
        assert_eq!(c.flops_per_token, 72.0);
        assert!(c
            .csv_row()
            .starts_with("compress,3x3x3,1-1-1-1,0,27,10,0,3,"));
    }

    #[test]
    fn single_rep_has_zero_std() {
        let spec = CompressSpec::unbounded(vec![4, 4], 0.1).unwrap();
        let vocab = CompressedVocab::build(&gaussian_table(5, 16, 2), &spec).unwrap();
        let cfg = BenchConfig { reps: 1, ..quick() };
        let r = bench_lookup_text(&vocab, TEXT_LENGTH, &cfg).unwrap();
        assert_eq!(r.std, 0.0);
        assert_eq!(r.length, 50);
        assert_eq!(r.tokens, 50);
        assert!(bench_lookup_text(&vocab, 5, &BenchConfig { reps: 0, ..quick() }).is_err());
    }

    #[test]
    fn summary_statistics() {
        let (mean, std, mom) = summarize(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(mean, 3.5);
        assert!((std - 3.5f64.sqrt()).abs() < 1e-12);
        // groups of two: 1.5, 3.5, 5.5
        assert_eq!(mom, 3.5);
        assert_eq!(summarize(&[2.0]), (2.0, 0.0, 2.0));
    }

    #[test]
    fn seeded_selection_is_deterministic() {
        let spec = CompressSpec::unbounded(vec![2, 2], 0.0).unwrap();
        let vocab = CompressedVocab::build(&gaussian_table(20, 4, 3), &spec).unwrap();
        assert_eq!(sample_ids(&vocab, 50, 9), sample_ids(&vocab, 50, 9));
        assert_ne!(sample_ids(&vocab, 50, 9), sample_ids(&vocab, 50, 10));
    }

    #[test]
    fn chain_length_grows_with_order() {
        // every shape of d = 64 at a fixed budget of 64 parameters
        let mut last = 0;
        for order in 1..=6 {
            for shape in factorizations_of_order(64, order) {
                let ranks = vec![1; order + 1];
                let cores = shape
                    .iter()
                    .map(|&i| crate::tensor::Tensor::new(vec![1, i, 1], vec![1.0; i]).unwrap())
                    .collect();
                let tt = TtVector::new(shape.clone(), ranks, cores).unwrap();
                assert_eq!(tt.chain_length(), order - 1);
                assert!(tt.chain_length() >= last);
            }
            last = order - 1;
        }
    }

    #[test]
    fn error_comparison_reports_both() {
        let table = gaussian_table(40, 16, 4);
        let spec = CompressSpec::uniform(vec![4, 4], 2, 0.0).unwrap();
        let cmp = compare_errors(&table, &spec).unwrap();
        assert_eq!(cmp.tt_params, 40 * 16);
        assert_eq!(cmp.svd_rank, 40 * 16 / 56);
        assert!(cmp.svd_params <= cmp.tt_params);
        assert!(cmp.tt_mean_rel_error.is_finite() && cmp.svd_mean_rel_error.is_finite());
    }

    #[test]
    fn parallel_mode_runs() {
        let spec = CompressSpec::unbounded(vec![2, 4], 0.2).unwrap();
        let r = bench_compress_parallel(&gaussian_table(16, 8, 5), &spec, &quick()).unwrap();
        assert_eq!(r.tokens, 16);
        assert!(r.mean >= 0.0);
    }
}
