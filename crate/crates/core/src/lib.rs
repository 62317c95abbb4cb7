//! Adaptive D-optimal beam design and maximum-likelihood Toeplitz covariance
//! estimation for uniform linear arrays behind a single RF chain.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod channel;
pub mod design;
pub mod error;
pub mod experiments;
pub mod measurement;
pub mod ml;
pub mod spectral;

pub use error::{Error, Result};
