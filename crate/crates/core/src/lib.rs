//! Sequential neural posterior estimation with kernel-weighted training,
//! multiple importance sampling across rounds and a support transform for
//! bounded priors. Also ships the benchmark simulators, a PMC-ABC reference
//! sampler and the evaluation metrics.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod harness;
pub mod kernel;
pub mod metrics;
pub mod nn;
pub mod parallel;
pub mod rng;
pub mod simulators;
pub mod smcabc;
pub mod snpe;
pub mod stats;
pub mod transform;

pub use error::{Error, Result};
