//! Benchmark harness: instance generation, grid runs of GEO and the baselines, and
//! aggregated tables for plotting.

pub mod error;
pub mod generate;
pub mod report;
pub mod run;
pub mod suite;
