//! Approximate Earth Mover's Distance in high-dimensional ℓ1 space.
//!
//! The pipeline reduces the aspect ratio of the input, embeds it into a
//! randomly shifted quadtree with a small perturbation, and runs a
//! multiplicative-weights dual solver whose weight distribution is sampled
//! through closest-pair queries instead of being materialised.
//!
//! Exact reference solvers live in [`exact`] and are used by the test suites
//! as independent oracles.

// `!(x > 0.0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aspect;
pub mod close_pairs;
pub mod cp;
pub mod error;
pub mod exact;
pub mod geometry;
pub mod instances;
pub mod mwu;
pub mod par;
pub mod sampler;
pub mod seed;
pub mod selftest;
pub mod stats;
pub mod tree;

pub use error::{EmdError, Result};
pub use geometry::{PointSet, RoundingState, SupplyDemand};
pub use seed::Seed;
