//! Experiment configuration, replicate fan-out and acceptance suites behind
//! the `qvlab` command.

pub mod config;
pub mod par;
pub mod suites;
