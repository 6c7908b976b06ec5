//! The compressed vocabulary: token id -> TT cores, with incremental
//! updates and TTE1 persistence.
//!
//! Every entry shares the store's shape and epsilon. Ranks differ per
//! token, since each vector gets whatever its own error budget needs.
//! Rank caps are a compression-time setting and are not persisted; a
//! loaded store compresses new tokens with structural caps unless
//! [`CompressedVocab::set_rank_caps`] says otherwise.

pub mod tte1;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::format::{write_atomic, DenseTable};
use crate::tt::{structural_max_ranks, tt_svd, CompressSpec, TtVector};

pub use tte1::IndexedFile;

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedVocab {
    spec: CompressSpec,
    entries: BTreeMap<u64, Arc<TtVector>>,
    total_params: usize,
}

impl CompressedVocab {
    /// An empty store that will compress with `spec`.
    pub fn new(spec: CompressSpec) -> Self {
        Self {
            spec,
            entries: BTreeMap::new(),
            total_params: 0,
        }
    }

    /// Empty store with structural (non-binding) rank caps.
    pub fn with_shape(shape: Vec<usize>, epsilon: f64) -> Result<Self> {
        Ok(Self::new(CompressSpec::unbounded(shape, epsilon)?))
    }

    /// Compresses every row of `table`; row `i` becomes token `i`.
    pub fn build(table: &DenseTable, spec: &CompressSpec) -> Result<Self> {
        Self::check_table(table, spec)?;
        let mut vocab = Self::new(spec.clone());
        for (i, row) in table.iter_rows().enumerate() {
            vocab.insert_compressed(i as u64, tt_svd(row, spec)?)?;
        }
        Ok(vocab)
    }

    /// [`build`](Self::build) on the rayon pool. Rows are independent and
    /// each compression is deterministic, so the result is identical.
    pub fn build_parallel(table: &DenseTable, spec: &CompressSpec) -> Result<Self> {
        Self::check_table(table, spec)?;
        let compressed: Vec<TtVector> = (0..table.rows())
            .into_par_iter()
            .map(|i| tt_svd(table.row(i), spec))
            .collect::<Result<_>>()?;
        let mut vocab = Self::new(spec.clone());
        for (i, tt) in compressed.into_iter().enumerate() {
            vocab.insert_compressed(i as u64, tt)?;
        }
        Ok(vocab)
    }

    fn check_table(table: &DenseTable, spec: &CompressSpec) -> Result<()> {
        if table.dim() != spec.dim() {
            return Err(Error::ShapeMismatch(format!(
                "table rows have length {}, shape {:?} needs {}",
                table.dim(),
                spec.shape(),
                spec.dim()
            )));
        }
        Ok(())
    }

    /// Inserts an already-compressed entry.
    pub fn insert_compressed(&mut self, id: u64, tt: TtVector) -> Result<()> {
        if tt.shape() != self.spec.shape() {
            return Err(Error::ShapeMismatch(format!(
                "entry shape {:?} differs from store shape {:?}",
                tt.shape(),
                self.spec.shape()
            )));
        }
        if self.entries.contains_key(&id) {
            return Err(Error::DuplicateToken(id));
        }
        self.total_params += tt.param_count();
        self.entries.insert(id, Arc::new(tt));
        Ok(())
    }

    /// Compresses `embedding` with the store's spec and adds it as `id`.
    /// Other entries are untouched.
    pub fn add_token(&mut self, id: u64, embedding: &[f64]) -> Result<()> {
        if self.entries.contains_key(&id) {
            return Err(Error::DuplicateToken(id));
        }
        let tt = tt_svd(embedding, &self.spec)?;
        self.insert_compressed(id, tt)
    }

    pub fn remove_token(&mut self, id: u64) -> Result<TtVector> {
        let tt = self.entries.remove(&id).ok_or(Error::TokenNotFound(id))?;
        self.total_params -= tt.param_count();
        Ok(Arc::unwrap_or_clone(tt))
    }

    /// Reconstructs the embedding of `id`.
    pub fn lookup(&self, id: u64) -> Result<Vec<f64>> {
        Ok(self.get(id).ok_or(Error::TokenNotFound(id))?.reconstruct())
    }

    /// Reconstructs `ids` back to back into one buffer of exactly
    /// `ids.len() * d` scalars.
    pub fn lookup_batch(&self, ids: &[u64]) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            self.get(id)
                .ok_or(Error::TokenNotFound(id))?
                .reconstruct_into(&mut out);
        }
        Ok(out)
    }

    pub fn get(&self, id: u64) -> Option<&TtVector> {
        self.entries.get(&id).map(Arc::as_ref)
    }

    pub fn contains(&self, id: u64) -> bool {
        self.entries.contains_key(&id)
    }

    /// Entries in ascending token-id order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, &TtVector)> {
        self.entries.iter().map(|(&id, tt)| (id, tt.as_ref()))
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn spec(&self) -> &CompressSpec {
        &self.spec
    }

    pub fn shape(&self) -> &[usize] {
        self.spec.shape()
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn epsilon(&self) -> f64 {
        self.spec.epsilon()
    }

    pub fn format_version(&self) -> u16 {
        tte1::VERSION
    }

    /// Rank caps used for future [`add_token`](Self::add_token) calls.
    pub fn set_rank_caps(&mut self, caps: Vec<usize>) -> Result<()> {
        self.spec = CompressSpec::new(self.spec.shape().to_vec(), caps, self.spec.epsilon())?;
        Ok(())
    }

    pub fn uses_structural_caps(&self) -> bool {
        self.spec.max_ranks() == structural_max_ranks(self.spec.shape()).as_slice()
    }

    /// Sum of the entries' core sizes.
    pub fn total_params(&self) -> usize {
        self.total_params
    }

    /// Parameters of the equivalent dense table, `V * d`.
    pub fn dense_params(&self) -> usize {
        self.len() * self.dim()
    }

    /// `(Vd - total) / total`; zero for an empty store.
    pub fn compression_ratio(&self) -> f64 {
        if self.total_params == 0 {
            return 0.0;
        }
        (self.dense_params() as f64 - self.total_params as f64) / self.total_params as f64
    }

    /// `(Vd - total) / Vd`; zero for an empty store.
    pub fn embedding_reduction(&self) -> f64 {
        if self.dense_params() == 0 {
            return 0.0;
        }
        (self.dense_params() as f64 - self.total_params as f64) / self.dense_params() as f64
    }

    /// For each interior bond, how many entries ended with each rank.
    pub fn rank_histogram(&self) -> Vec<BTreeMap<usize, usize>> {
        let n = self.shape().len();
        let mut hist = vec![BTreeMap::new(); n.saturating_sub(1)];
        for tt in self.entries.values() {
            for (k, bucket) in hist.iter_mut().enumerate() {
                *bucket.entry(tt.ranks()[k + 1]).or_insert(0) += 1;
            }
        }
        hist
    }

    /// Full decompression, rows in token-id order.
    pub fn to_dense(&self) -> DenseTable {
        let d = self.dim();
        let mut data = Vec::with_capacity(self.len() * d);
        for tt in self.entries.values() {
            tt.reconstruct_into(&mut data);
        }
        DenseTable::new(self.len(), d, data).expect("every entry has length d")
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        tte1::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        tte1::decode(bytes)
    }

    /// Writes the TTE1 file via temp file and rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// A store shared between threads: readers take cheap immutable
/// snapshots, and writers build a modified copy and swap it in.
///
/// A snapshot is never mutated, so a reader holding one keeps a
/// consistent view while updates proceed.
#[derive(Debug)]
pub struct SharedVocab {
    current: RwLock<Arc<CompressedVocab>>,
}

impl SharedVocab {
    pub fn new(vocab: CompressedVocab) -> Self {
        Self {
            current: RwLock::new(Arc::new(vocab)),
        }
    }

    pub fn snapshot(&self) -> Arc<CompressedVocab> {
        Arc::clone(&self.current.read().unwrap_or_else(|e| e.into_inner()))
    }

    /// Applies `f` to a copy and publishes it if `f` succeeds. Entries are
    /// reference-counted, so the copy costs one map clone.
    pub fn update<T>(&self, f: impl FnOnce(&mut CompressedVocab) -> Result<T>) -> Result<T> {
        let mut guard = self.current.write().unwrap_or_else(|e| e.into_inner());
        let mut next = CompressedVocab::clone(&guard);
        let out = f(&mut next)?;
        *guard = Arc::new(next);
        Ok(out)
    }

    pub fn lookup(&self, id: u64) -> Result<Vec<f64>> {
        self.snapshot().lookup(id)
    }
}
