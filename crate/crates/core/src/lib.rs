//! Deep discrete encoder (DDE) copulas for mixed-type tabular data.
//!
//! A DDE copula stacks layers of binary latent variables above a Gaussian
//! layer `Z`, which is linked to the observed columns only through their
//! ranks. Parameters are estimated by a Monte Carlo EM that resamples `Z`
//! inside the rank-consistent set, samples the binary layers with a
//! product-form Gibbs step, and learns every layer width with a cumulative
//! shrinkage process prior.
//!
//! The crate is `no_std` (with `alloc`). The default `std` feature turns on
//! column- and row-parallel sweeps through rayon; results are identical with
//! or without it because every parallel unit owns its own RNG substream.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod csp;
pub mod error;
pub mod frame;
pub mod init;
pub mod latent;
pub mod linalg;
pub mod model;
pub mod mstep;
pub mod rank;
pub mod rng;
pub mod sim;
pub mod special;

mod par;

pub use error::{Error, Result};
pub use frame::{DataTable, RankFrame};
pub use linalg::{BinaryMatrix, Matrix};
pub use model::{DdeDims, DdeParams, LatentState, WeightMatrix};
pub use mstep::{fit, FitConfig, FitResult, Variant};
