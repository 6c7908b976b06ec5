//! Training-free compression of token embedding tables into per-token
//! tensor-train (matrix product state) cores.
//!
//! Each row of an embedding table is folded into an order-N tensor and
//! decomposed by TT-SVD ([`tt::tt_svd`]). The resulting [`CompressedVocab`]
//! supports reconstruction on lookup, incremental token add/remove and a
//! compact on-disk format (TTE1). Alongside the compressor live a shape
//! planner, a whole-matrix SVD baseline, an analytic energy model,
//! perplexity/compression metrics and a small benchmark harness.

pub mod baseline;
pub mod bench;
pub mod cli;
pub mod energy;
pub mod error;
pub mod format;
pub mod matrix;
pub mod metrics;
pub mod planner;
pub mod svd;
pub mod tensor;
pub mod tt;
pub mod vocab;

pub use baseline::LowRankTable;
pub use error::{Error, ErrorClass, Result};
pub use matrix::Matrix;
pub use planner::{ShapePlan, ShapePolicy};
pub use tensor::Tensor;
pub use tt::{tt_svd, CompressSpec, TtVector};
pub use vocab::{CompressedVocab, SharedVocab};
