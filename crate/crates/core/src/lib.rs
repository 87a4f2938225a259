//! Electricity theft detection from daily smart-meter series.
//!
//! The crate bundles everything needed to run the detection ladder end to
//! end: a small tensor/layer toolkit with exact gradients ([`nn`]), dense
//! and multi-scale dense blocks ([`blocks`]), the three network
//! architectures ([`model`]), data loading, imputation, standardization and
//! a synthetic generator ([`data`]), handcrafted features for the shallow
//! baselines ([`features`], [`baselines`]), and training, cross-validation
//! and metrics ([`train`], [`experiment`], [`metrics`]).

pub mod baselines;
pub mod blocks;
pub mod cli;
pub mod data;
pub mod error;
pub mod experiment;
pub mod features;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod seeds;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};

/// Fixed series length: one year of daily readings.
pub const SERIES_LEN: usize = 365;
