//! Configuration, CSV output, verification harness and subcommand drivers
//! built on `stochrank-core`.

// Guards like `!(x > 0.0)` are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
mod error;
pub mod output;
pub mod verify;

pub use config::{Run, RunConfig};
pub use error::{AppError, AppResult};
