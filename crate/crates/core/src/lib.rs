#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Privacy accounting and experimentation toolkit for differentially private
//! SGD with gradient clipping and parameter projection.

pub mod accountant;
pub mod cli;
pub mod error;
pub mod fmt;
pub mod mia;
pub mod optimizer;
pub mod problems;
pub mod utility;

pub use error::{Error, Result};
