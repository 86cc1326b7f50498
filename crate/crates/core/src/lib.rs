//! Linear associative-memory knowledge editing with geometric diagnostics.

// `!(x > 0.0)` is the NaN-rejecting form used by every validator.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod editors;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod memory;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
