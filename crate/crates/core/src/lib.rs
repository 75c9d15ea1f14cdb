//! Desk-scale laboratory for attention-score reuse in Transformer encoders.
//!
//! The crate implements a reuse multi-head attention architecture (a mix of
//! exact heads and heads that borrow score matrices from earlier layers),
//! total-variation-based attention similarity analysis, closed-form
//! parameter/FLOP accounting, numerical verification of the two supporting
//! lemmas, and a synthetic-task training harness. A single CLI (`rta`) drives
//! all of it.

// indexed loops are the house style in the numeric kernels
#![allow(clippy::needless_range_loop)]

pub mod cost;
pub mod error;
pub mod model;
pub mod numerics;
pub mod parallel;
pub mod similarity;
pub mod tasks;
pub mod theory;

pub use error::{Error, Result};
