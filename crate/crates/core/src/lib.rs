//! Numerical Finsler and Berwald geometry on coordinate charts.

// Index loops follow the tensor notation; `!(a > b)` also rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod connection;
pub mod curvature;
pub mod error;
pub mod expr;
pub mod gallery;
pub mod holonomy;
pub mod linalg;
pub mod norms;
pub mod sampling;

pub use error::{Error, Result};
