//! Experiment configuration and orchestration.

pub mod config;
pub mod emit;
pub mod env;
pub mod simulate;
pub mod sweep;
pub mod train;
