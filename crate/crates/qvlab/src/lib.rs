//! Simulation lab for the QuickVal and QuickQuant cost processes: finite-n
//! simulation on a shared key sequence, the natural coupling with Quickselect,
//! Gaussian limit processes, the intrinsic metric and Skorokhod-space tools.

pub mod algorithms;
pub mod cadlag;
pub mod coupling;
pub mod limit;
pub mod metrics;
pub mod rng;
pub mod stats;
pub mod tree;
