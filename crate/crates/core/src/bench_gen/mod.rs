//! Microbenchmark generation: latency chains, throughput kernels, port
//! probes and the blocking-instruction tables they rely on.

mod alloc;
mod blocking;
mod latency;
mod library;
mod throughput;

use thiserror::Error;

use crate::isa::RegClass;

pub use alloc::{bind_independent, RegAlloc};
pub use blocking::{build_blocking_table, BlockingEntry, BlockingTable};
pub use latency::{
    calibration_kernels, cross_class_candidates, idiom_link_chain, latency_kernels, zero_idiom_probe, LatencyKernel, LatencyKind,
    LatencyPlan, ZERO_IDIOM_LINKS,
};
pub use library::{ChainKey, ChainLibrary, ShuffleKind};
pub use throughput::{isolation_kernel, port_probe, throughput_kernels, ThroughputKernel, LENGTHS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("no allocatable {0} registers")]
    NoRegisters(RegClass),
    #[error("register {0} has no {1}-bit view")]
    NoView(String, u32),
    #[error("unknown instruction `{0}`")]
    UnknownInstruction(String),
    #[error("operands {src} -> {dst} are not a dependency pair")]
    NotAPair { src: usize, dst: usize },
    #[error("{0}")]
    Unchainable(String),
    #[error("no blocking instruction for port combinations: {}", .0.join(", "))]
    Uncoverable(Vec<String>),
    #[error("measurement failed: {0}")]
    Measure(String),
}
