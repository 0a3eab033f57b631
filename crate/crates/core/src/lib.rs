//! GNN-based detection and joint detection-decoding for ISI channels,
//! with exact and classical baselines, training and EXIT tooling.

pub mod channel;
pub mod classical;
pub mod error;
pub mod gnn;
pub mod graphs;
pub mod ldpc;
pub mod llr;
pub mod metrics;
pub mod neural_core;
pub mod parallel;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
