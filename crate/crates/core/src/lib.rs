//! Binary hashing toolkit for feature-vector retrieval.
//!
//! The pipeline: frame-level features are fused into one vector per video
//! ([`ingest`]), mapped to binary-like codes by a trainable two-layer head
//! ([`hash_head`]) or a classic linear hasher ([`baselines`]), thresholded
//! and packed into 64-bit words, then searched exhaustively by Hamming
//! distance ([`index`]). [`eval`] scores rankings with mAP@k and builds
//! method × code-length comparison reports.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod hash_head;
pub mod index;
pub mod ingest;
pub mod linalg;
pub mod rng;
pub mod synth;

mod bytes;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use rng::Rng;
