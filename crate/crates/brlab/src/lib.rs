//! Grid engine, verification harness and command line for Bochner–Riesz
//! summability experiments.
//!
//! * [`grid`]: regular grids, sampled functions and the n-dimensional FFT.
//! * [`engine`]: multiplier application, the Bochner–Riesz means by the
//!   multiplier and kernel routes, `I^α`, and the kernels `P`, `U`, `V`.
//! * [`harness`]: decay fits and the verification experiments.
//! * [`io`]: atomic writes, fixed-format JSON, binary fields and CSV.
//! * [`cli`]: configuration and subcommand dispatch.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod engine;
pub mod error;
pub mod grid;
pub mod harness;
pub mod io;

pub use error::{LabError, LabResult};
