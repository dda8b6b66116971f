//! Command-line tooling around `pivot-core`: configuration, image IO, the
//! HTTP oracle, evaluation sweeps, run directories and the simulator driver.

pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod imageio;
pub mod manifest;
pub mod oracles;
pub mod remote;
pub mod rundir;
pub mod sweep;
