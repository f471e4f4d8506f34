//! Measurement protocol over an abstract backend.
//!
//! Every measurement runs the kernel body with `n_small` and `n_large`
//! copies and divides the difference by `n_large - n_small`, so any fixed
//! per-run overhead cancels exactly. The pair is repeated and aggregated.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::Kernel;
use crate::machine::{self, CounterSnapshot, Machine, SimError};
use crate::ports::PortSet;
use crate::rational::{self, int, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("counter overflow ({0} bits)")]
    CounterOverflow(u32),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("backend failure: {0}")]
    Failure(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeasureError {
    #[error("invalid measurement configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("all {0} repetitions were discarded after counter overflows")]
    AllDiscarded(usize),
}

/// What a backend can measure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Capabilities {
    pub ports: Vec<u8>,
    /// Port combinations of the functional units, with the unit names.
    pub fu_combinations: Vec<(PortSet, Vec<String>)>,
    pub counters: Vec<String>,
}

pub trait Backend: Sync {
    /// Identifier recorded in result provenance.
    fn id(&self) -> String;

    fn capabilities(&self) -> &Capabilities;

    /// Digest of the machine description the backend measures.
    fn machine_digest(&self) -> String;

    /// Whether the backend can execute the instruction.
    fn supports(&self, id: &str) -> bool;

    /// Runs `copies` back-to-back copies of the kernel body once.
    fn run(&self, kernel: &Kernel, copies: usize) -> Result<CounterSnapshot, BackendError>;

    fn supports_kernel(&self, kernel: &Kernel) -> bool {
        kernel.instances.iter().all(|i| self.supports(&i.id))
    }
}

/// Reference backend: the port-model simulator.
#[derive(Debug, Clone)]
pub struct SimBackend {
    machine: Machine,
    caps: Capabilities,
    overhead_cycles: u64,
    overhead_uops: BTreeMap<u8, u64>,
    counter_bits: u32,
    /// Runs are a pure function of kernel and copy count, so repeated runs
    /// are answered from here.
    cache: Option<Arc<Mutex<HashMap<(Kernel, usize), CounterSnapshot>>>>,
}

impl SimBackend {
    pub fn new(machine: Machine) -> Self {
        let spec = machine.spec();
        let fu_combinations = spec
            .fu_combinations()
            .into_iter()
            .map(|c| (c, spec.units_for(c).into_iter().map(str::to_string).collect()))
            .collect();
        let caps = Capabilities {
            ports: spec.ports.clone(),
            fu_combinations,
            counters: vec!["cycles".into(), "uops-per-port".into(), "total-uops".into()],
        };
        SimBackend {
            machine,
            caps,
            overhead_cycles: 0,
            overhead_uops: BTreeMap::new(),
            counter_bits: 48,
            cache: Some(Arc::default()),
        }
    }

    /// Adds a constant to every run, standing in for serialization and
    /// counter-read overhead of a real harness.
    pub fn with_overhead(mut self, cycles: u64, uops: BTreeMap<u8, u64>) -> Self {
        self.overhead_cycles = cycles;
        self.overhead_uops = uops;
        self
    }

    pub fn with_counter_bits(mut self, bits: u32) -> Self {
        self.counter_bits = bits;
        self
    }

    /// Simulates every run from scratch.
    pub fn without_cache(mut self) -> Self {
        self.cache = None;
        self
    }

    pub fn machine(&self) -> &Machine {
        &self.machine
    }
}

impl Backend for SimBackend {
    fn id(&self) -> String {
        let name = &self.machine.spec().name;
        if name.is_empty() {
            "simulator".to_string()
        } else {
            format!("simulator:{name}")
        }
    }

    fn capabilities(&self) -> &Capabilities {
        &self.caps
    }

    fn machine_digest(&self) -> String {
        self.machine.digest().to_string()
    }

    fn supports(&self, id: &str) -> bool {
        self.machine.supports(id)
    }

    fn run(&self, kernel: &Kernel, copies: usize) -> Result<CounterSnapshot, BackendError> {
        let mut snap = match &self.cache {
            Some(cache) => {
                let key = (kernel.clone(), copies);
                let hit = cache.lock().expect("cache lock").get(&key).cloned();
                match hit {
                    Some(s) => s,
                    None => {
                        let s = machine::run_copies(&self.machine, kernel, copies)?;
                        cache.lock().expect("cache lock").insert(key, s.clone());
                        s
                    }
                }
            }
            None => machine::run_copies(&self.machine, kernel, copies)?,
        };
        snap.cycles += self.overhead_cycles;
        for (port, extra) in &self.overhead_uops {
            *snap.uops_per_port.entry(*port).or_insert(0) += extra;
            snap.total_uops += extra;
        }
        let limit = 1u64.checked_shl(self.counter_bits).unwrap_or(u64::MAX);
        if snap.cycles >= limit || snap.total_uops >= limit {
            return Err(BackendError::CounterOverflow(self.counter_bits));
        }
        Ok(snap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregator {
    #[default]
    Mean,
    Median,
}

impl Aggregator {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregator::Mean => "mean",
            Aggregator::Median => "median",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mean" => Some(Aggregator::Mean),
            "median" => Some(Aggregator::Median),
            _ => None,
        }
    }

    fn apply(self, values: &[Rational]) -> Rational {
        match self {
            Aggregator::Mean => rational::mean(values),
            Aggregator::Median => rational::median(values),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MeasurementConfig {
    pub n_small: usize,
    pub n_large: usize,
    pub repetitions: usize,
    pub warm_up: bool,
    pub aggregator: Aggregator,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        MeasurementConfig {
            n_small: 10,
            n_large: 110,
            repetitions: 100,
            warm_up: true,
            aggregator: Aggregator::Mean,
        }
    }
}

impl MeasurementConfig {
    pub fn validate(&self) -> Result<(), MeasureError> {
        if self.n_large <= self.n_small {
            return Err(MeasureError::Config("n-large must exceed n-small".into()));
        }
        if self.repetitions < 1 {
            return Err(MeasureError::Config("at least one repetition is needed".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MeasurementResult {
    pub cycles: Rational,
    pub uops_per_port: BTreeMap<u8, Rational>,
    pub total_uops: Rational,
    /// Max minus min of the per-repetition cycle deltas.
    pub raw_spread: Rational,
    pub discarded: usize,
}

impl MeasurementResult {
    pub fn uops_on(&self, ports: PortSet) -> Rational {
        ports
            .iter()
            .filter_map(|p| self.uops_per_port.get(&p))
            .copied()
            .sum()
    }

    pub fn dispatched_uops(&self) -> Rational {
        self.uops_per_port.values().copied().sum()
    }

    /// Ports on which any uops were counted.
    pub fn used_ports(&self) -> PortSet {
        self.uops_per_port
            .iter()
            .filter(|(_, v)| **v > int(0))
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn scaled(&self, divisor: i64) -> MeasurementResult {
        let d = int(divisor);
        MeasurementResult {
            cycles: self.cycles / d,
            uops_per_port: self.uops_per_port.iter().map(|(p, v)| (*p, v / d)).collect(),
            total_uops: self.total_uops / d,
            raw_spread: self.raw_spread / d,
            discarded: self.discarded,
        }
    }
}

fn delta(large: u64, small: u64, span: i64) -> Rational {
    Rational::new(large as i64 - small as i64, span)
}

/// Measures one iteration of the kernel body.
pub fn run_delta(
    kernel: &Kernel,
    backend: &dyn Backend,
    config: &MeasurementConfig,
) -> Result<MeasurementResult, MeasureError> {
    config.validate()?;
    if kernel.is_empty() {
        return Ok(MeasurementResult::default());
    }
    if config.warm_up {
        match backend.run(kernel, config.n_small) {
            Ok(_) | Err(BackendError::CounterOverflow(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    let span = (config.n_large - config.n_small) as i64;
    let mut cycles = Vec::with_capacity(config.repetitions);
    let mut totals = Vec::with_capacity(config.repetitions);
    let mut ports: BTreeMap<u8, Vec<Rational>> = BTreeMap::new();
    let mut discarded = 0;
    for _ in 0..config.repetitions {
        let pair = backend
            .run(kernel, config.n_small)
            .and_then(|s| backend.run(kernel, config.n_large).map(|l| (s, l)));
        let (small, large) = match pair {
            Ok(p) => p,
            Err(BackendError::CounterOverflow(_)) => {
                discarded += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        cycles.push(delta(large.cycles, small.cycles, span));
        totals.push(delta(large.total_uops, small.total_uops, span));
        for (port, count) in &large.uops_per_port {
            let before = small.uops_per_port.get(port).copied().unwrap_or(0);
            ports.entry(*port).or_default().push(delta(*count, before, span));
        }
    }
    if cycles.is_empty() {
        return Err(MeasureError::AllDiscarded(discarded));
    }
    let spread = cycles.iter().max().copied().unwrap_or_default() - cycles.iter().min().copied().unwrap_or_default();
    Ok(MeasurementResult {
        cycles: config.aggregator.apply(&cycles),
        uops_per_port: ports
            .into_iter()
            .map(|(p, v)| (p, config.aggregator.apply(&v)))
            .collect(),
        total_uops: config.aggregator.apply(&totals),
        raw_spread: spread,
        discarded,
    })
}
