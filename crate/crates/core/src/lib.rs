//! Stealthy secret key generation from correlated sources.
//!
//! All information quantities are in bits.

// `!(x > 0.0)` rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod bounds;
pub mod degrade;
pub mod error;
pub mod probcore;
pub mod protocol;
pub mod sources;
pub mod special;

pub use error::{Error, Result};
pub use probcore::{
    conditional_kl, conditional_mutual_information, entropy, kl_divergence, mutual_information, Channel,
    CmiPattern, FiniteDist, JointDist2, JointDist3, PROB_TOL,
};
