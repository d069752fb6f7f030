//! Distributed gradient-free aggregative optimization: ARGFree and
//! ARGFree-EM over simulated multi-agent networks, their convergence
//! certificates, and a formation-control benchmark.

// `!(x >= 0.0)` rejects NaN along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod certify;
pub mod error;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod problem;
pub mod rng;
pub mod smoothing;
pub mod solver;

pub use error::{Error, Result};
