// Range checks are written as `!(x > lo)` so that NaN fails them; index
// loops follow the per-axis and per-coil formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod allocation;
pub mod classical;
pub mod config;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod pgnn;
pub mod pipeline;
pub mod plant;
pub mod sim;
pub mod transform;

pub use error::{Error, ErrorKind, Result};
