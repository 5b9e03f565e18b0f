//! Confident clustering of high-dimensional vectors.
//!
//! The pipeline turns a `d x n` data matrix into a two-round clustering:
//!
//! 1. [`pca`] fits a truncated PCA and scores every vertex pair by its
//!    compression ratio (original distance over projected distance).
//! 2. [`corrgraph`] keeps the top-scoring pairs as edges of an approximate
//!    correlation graph.
//! 3. [`confident`] repeatedly extracts dense vertex sets from that graph
//!    with a power-iteration spectral heuristic.
//! 4. [`merge`] greedily joins the extracted sets into primary clusters
//!    using neighborhood-overlap affinities.
//! 5. [`assign`] places the remaining vertices by absolute majority vote
//!    over their closest neighbors.
//!
//! [`eval`] provides the comparison metrics, [`synth`] deterministic data
//! generators used as test oracles, and [`pipeline`] the end-to-end driver
//! consumed by the CLI.

pub mod assign;
pub mod confident;
pub mod corrgraph;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod merge;
pub mod pca;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
