//! File formats, replication-parallel placebo runs and the command-line front
//! end for `rolldiag-core`.

pub mod commands;
pub mod config;
pub mod io;
pub mod placebo;

pub use config::RunConfig;
pub use placebo::run_placebo_parallel;
