//! Benchmark harness for the prosumer coalition game engine: experiment
//! orchestration, deviation statistics and CSV/report emission.

pub mod report;
pub mod run;
pub mod stats;
