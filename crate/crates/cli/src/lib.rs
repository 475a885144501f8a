//! Library side of the trajsim CLI: command implementations, the benchmark
//! harness, the random-circuit generator, and comparison metrics.

pub mod bench;
pub mod commands;
pub mod metrics;
pub mod randcirc;

pub use commands::{cmd_run, cmd_trajectories, CliError, RunOptions, TrajOptions};
pub use metrics::l1_distance;
