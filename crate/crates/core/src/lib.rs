#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod error;
pub mod fixed_point;
pub mod grid;
pub mod harness;
pub mod oracle;
pub mod ou_model;
pub mod problem;
pub mod quadrature;
pub mod randomized_weight;
pub mod rng;

pub use error::{Error, Result};
