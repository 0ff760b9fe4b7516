//! Differentiable body model fitting from silhouettes and keypoints.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod body;
pub mod certify;
pub mod diff;
pub mod error;
pub mod fit;
pub mod objectives;
pub mod render;
pub mod synth;

pub use error::{Error, Result};
