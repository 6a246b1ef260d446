//! Scene summarization: compress a long pose-tagged walkthrough into a small
//! set of spatially diverse keyframes.
//!
//! The pipeline has two stages. Frames are first partitioned into `k`
//! roughly equal clusters ([`clustering`]), then an autoencoder trained with a
//! reconstruction + cluster-contrastive objective picks one representative
//! per cluster ([`selector`]). [`metrics`] scores a keyframe set by how many
//! keyframe pairs lie within a distance threshold of each other, and
//! [`baselines`] provides the classic summarizers used for comparison.

pub mod baselines;
pub mod clustering;
pub mod dataset;
mod error;
pub mod features;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod selector;
pub mod summary;
pub mod svg;

pub use error::{Error, Result};
pub use summary::SummaryResult;
