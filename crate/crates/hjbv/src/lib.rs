//! Std companion to `hjbv-core`: a rayon executor, the run configuration
//! format, CSV/JSON/markdown outputs and the `solve`, `simulate`, `verify`
//! and `benchmark` workflows used by the `hjbv` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod parallel;
pub mod report;

pub use commands::{
    cmd_benchmark, cmd_simulate, cmd_solve, cmd_verify, finish, Benchmark, Outcome,
};
pub use config::{ConfigError, RunConfig};
pub use error::{Error, Result};
pub use parallel::Parallel;
