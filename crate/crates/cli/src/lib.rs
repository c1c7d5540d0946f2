//! Command-line driver for `latticemc-core`: flat-file configuration,
//! parameter sweeps and CSV output with provenance.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod pipeline;

pub use config::{parse_config, Command, ConfigError, RunSpec};
pub use output::{execute, manifest_hash, Table};
pub use pipeline::RunError;
