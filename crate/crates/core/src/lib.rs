//! Microbenchmark-driven characterization of instruction latency,
//! throughput and port usage, with a port-model simulator as the reference
//! measurement backend.

pub mod bench_gen;
pub mod cli;
pub mod exec;
pub mod inference;
pub mod isa;
pub mod kernel;
pub mod machine;
pub mod measure;
pub mod pipeline;
pub mod ports;
pub mod rational;
pub mod report;
mod xmlutil;
