//! File formats, the Monte Carlo harness and the command-line front end for
//! [`tkjump`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod io;
pub mod manifest;
pub mod studies;

pub use error::{Result, ToolError};
