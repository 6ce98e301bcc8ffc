//! Core algorithms for embedding-based data curation.
//!
//! This crate is the computational half of the toolkit: it scores
//! precomputed image/text embeddings (cosine similarity and the
//! variance-alignment quadratic form), selects subsets (top-k, two-stage
//! quality+informativeness filtering, dynamic greedy removal, optimal-design
//! baselines), and ships a small linear latent-variable simulator used to
//! validate the selection theory at desk scale.
//!
//! Everything here is pure computation over in-memory buffers: the crate is
//! `no_std` (with `alloc`) and leaves file formats, parallel drivers, and the
//! CLI to the companion `vas-tools` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod combinatorics;
pub mod embed;
pub mod error;
pub mod linalg;
pub mod optdesign;
pub mod rng;
pub mod scoring;
pub mod selection;
pub mod sim;

pub use embed::{align_pairs, EmbeddingMatrix, Modality, PairedEmbeddings};
pub use error::Error;
pub use linalg::Mat;
pub use scoring::{MomentMatrix, ScoreKind, ScoreVector};
pub use selection::{SelectionResult, StageRecord, VasDTrace};

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
