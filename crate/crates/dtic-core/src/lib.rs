//! Phenotype discovery for sparse, irregularly sampled vital-sign series.
//!
//! The pipeline: interpolate each encounter's six vital-sign series onto a
//! fixed reference grid (three information channels per variable), encode the
//! result with a GRU seq2seq model regularized by RBF re-interpolation and two
//! auxiliary tasks, then refine the embedding jointly with cluster centroids
//! under a KL objective and read out phenotype labels by nearest centroid.

pub mod autodiff;
pub mod auxheads;
pub mod cli;
pub mod clustering;
pub mod config;
pub mod error;
pub mod interpnet;
pub mod model;
pub mod modelsel;
pub mod pipeline;
pub mod reinterp;
pub mod rng;
pub mod seq2seq;
#[cfg(test)]
pub(crate) mod testutil;
pub mod timeseries;
pub mod trainer;

pub use error::{Error, Result};
