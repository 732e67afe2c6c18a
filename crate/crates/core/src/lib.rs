//! Finite-time adaptive set-point regulation of Euler–Lagrange systems with
//! energy-based regressors and dynamic regressor extension and mixing.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod control;
pub mod drem;
pub mod error;
pub mod mathx;
pub mod plant;
pub mod regression;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
