//! Align and merge independently trained MLP classifiers.
//!
//! The pipeline is `Align` then `Agg`: model B is permuted neuron by neuron
//! onto model A (activation correlation or weight matching), and the two
//! aligned parameter sets are combined either uniformly or with one learned
//! sigmoid-constrained coefficient per scalar parameter.

pub mod align;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod merge;
pub mod multimerge;
pub mod nn;
pub mod numerics;
pub mod pipeline;

pub use error::{Error, Result};
