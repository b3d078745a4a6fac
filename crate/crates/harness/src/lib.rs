//! Experiment harness for the cognitive radio network simulator: scenario
//! configuration, trial orchestration, statistics, and CSV/JSON emission.

pub mod config;
pub mod emit;
pub mod runner;
pub mod sweep;
