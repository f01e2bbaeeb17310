//! Nash equilibria of the multi-dimensional quadratic cheap-talk game.
//!
//! An encoder observes `m ∈ ℝⁿ` and picks a message; a decoder maps the
//! message to an action `u`. The encoder's cost is `‖m − u − b‖²` for a
//! fixed bias `b`, the decoder's cost `‖m − u‖²`.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
mod error;
pub mod equilibrium;
pub mod geometry;
pub mod ratedist;
pub mod sources;
pub mod transforms;

pub use error::{Error, Result};
