//! Benchmark engine for GNSS-based precipitation nowcasting.
//!
//! The crate covers the whole pipeline: aligning station and gridded sources onto
//! an hourly grid ([`ingest`]), diagnosing the data ([`stats`]), forecasters and
//! the attention-bias plug-in ([`models`], [`bfpf`]), and the evaluation
//! protocols ([`eval`]). [`synth`] generates desk-scale synthetic stations.

pub mod bfpf;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod models;
pub mod stats;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::*;
