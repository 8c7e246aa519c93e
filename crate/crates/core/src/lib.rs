//! Tests of mutual independence among many variables built from pairwise
//! rank correlations.
//!
//! The pipeline is ranks -> per-pair U or W statistics -> an aggregate
//! (sum of squares, unbiased signal estimate, plain sum, or maximum) ->
//! rescaling -> a p-value from the normal or Gumbel limit or from an exact
//! Monte Carlo permutation null.

pub mod aggregate;
pub mod calibrate;
pub mod cli;
pub mod constants;
pub mod error;
pub mod kernels;
pub mod pairwise;
pub mod ranks;
pub mod rng;
pub mod simgen;
pub mod summation;

pub use error::{Error, Result};
