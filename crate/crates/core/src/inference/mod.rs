//! Latency, port-usage and throughput inference from measurements.

mod lp;

use std::collections::BTreeMap;

use num_traits::Signed;
use thiserror::Error;

use crate::bench_gen::{
    calibration_kernels, idiom_link_chain, isolation_kernel, latency_kernels, port_probe, throughput_kernels, zero_idiom_probe,
    BlockingTable, ChainLibrary, GenError, LatencyKind, LatencyPlan, ZERO_IDIOM_LINKS,
};
use crate::isa::{Attribute, Catalog, InstructionDesc};
use crate::kernel::{Kernel, ValueClass};
use crate::measure::{run_delta, Backend, MeasureError, MeasurementConfig, MeasurementResult};
use crate::ports::{PortSet, PortUsage};
use crate::rational::{self, int, Rational};

pub use lp::{min_max_load, minimize, LpOutcome};

/// Tolerance when rounding measured uop counts to integers.
pub const ROUNDING_TOLERANCE: Rational = Rational::new_raw(1, 10);

/// Maximum latency assumed for instructions without any chainable pair.
pub const DEFAULT_LATENCY_CAP: i64 = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InferenceError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error("{instr}: inconsistent uop count {value} on {ports} (raw {raw}, blockRep {block_rep})")]
    Inconsistent {
        instr: String,
        ports: String,
        value: String,
        raw: String,
        block_rep: usize,
    },
    #[error("{instr}: measured {value} uops in isolation, not an integer")]
    FractionalUops { instr: String, value: String },
    #[error("{instr}: no blocking instruction for {ports}")]
    MissingBlocker { instr: String, ports: String },
}

/// Runs the protocol and maps errors.
fn measure(kernel: &Kernel, ctx: &Context) -> Result<MeasurementResult, InferenceError> {
    Ok(run_delta(kernel, ctx.backend, &ctx.config)?)
}

/// Everything an inference step needs.
#[derive(Clone, Copy)]
pub struct Context<'a> {
    pub catalog: &'a Catalog,
    pub lib: &'a ChainLibrary,
    pub backend: &'a dyn Backend,
    pub config: MeasurementConfig,
}

/// Measures the helper chains by themselves and records their latencies.
pub fn calibrate(
    catalog: &Catalog,
    backend: &dyn Backend,
    config: &MeasurementConfig,
) -> Result<ChainLibrary, InferenceError> {
    let mut lib = ChainLibrary::from_catalog(catalog);
    for (key, kernel) in calibration_kernels(catalog, &lib) {
        if !backend.supports_kernel(&kernel) {
            continue;
        }
        let m = run_delta(&kernel, backend, config)?;
        lib.set_latency(key, m.cycles);
    }
    // The slowest serial link chain shows best whether an idiom lets
    // iterations overlap.
    let floor = int(ZERO_IDIOM_LINKS as i64);
    for (class, ids) in lib.link_candidates.clone() {
        let mut best: Option<(String, Rational)> = None;
        for id in ids {
            let kernel = idiom_link_chain(&id, catalog)?;
            if !backend.supports_kernel(&kernel) {
                continue;
            }
            let cycles = run_delta(&kernel, backend, config)?.cycles;
            if cycles >= floor && best.as_ref().map_or(true, |(_, c)| cycles > *c) {
                best = Some((id, cycles));
            }
        }
        if let Some((id, cycles)) = best {
            lib.set_idiom_link(class, &id, cycles);
        }
    }
    Ok(lib)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatencyValue {
    pub kind: LatencyKind,
    pub cycles: Rational,
    /// Chain instructions of the kernel the value came from.
    pub chain: String,
    pub same_register: bool,
    pub value_class: Option<ValueClass>,
}

impl LatencyValue {
    /// Non-integer latencies are reported raw but flagged.
    pub fn is_fractional(&self) -> bool {
        !self.cycles.is_integer()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PairLatency {
    Values(Vec<LatencyValue>),
    Unchainable(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LatencyResult {
    pub pairs: BTreeMap<(usize, usize), PairLatency>,
}

impl LatencyResult {
    pub fn values(&self, src: usize, dst: usize) -> &[LatencyValue] {
        match self.pairs.get(&(src, dst)) {
            Some(PairLatency::Values(v)) => v,
            _ => &[],
        }
    }

    /// Different-register value without value class.
    pub fn headline(&self, src: usize, dst: usize) -> Option<&LatencyValue> {
        self.values(src, dst)
            .iter()
            .find(|v| !v.same_register && v.value_class.is_none())
    }

    pub fn value_class(&self, src: usize, dst: usize, class: ValueClass) -> Option<&LatencyValue> {
        self.values(src, dst).iter().find(|v| v.value_class == Some(class))
    }

    pub fn same_register(&self, src: usize, dst: usize) -> Option<&LatencyValue> {
        self.values(src, dst).iter().find(|v| v.same_register)
    }

    /// Largest latency over all pairs, used to size port probes.
    pub fn max_latency(&self) -> Option<Rational> {
        self.pairs
            .values()
            .filter_map(|p| match p {
                PairLatency::Values(v) => Some(v),
                PairLatency::Unchainable(_) => None,
            })
            .flatten()
            .map(|v| v.cycles)
            .max()
    }
}

fn kind_rank(kind: LatencyKind) -> u8 {
    match kind {
        LatencyKind::Exact | LatencyKind::ZeroIdiomFastPath => 0,
        LatencyKind::RoundTrip => 1,
        LatencyKind::UpperBound => 2,
    }
}

/// Per-pair latency from one kernel iteration.
fn per_link(kernel: &Kernel, m: &MeasurementResult) -> Rational {
    let chain = kernel.chain.as_ref().expect("latency kernel");
    m.cycles / int(chain.occurrences as i64) - chain.subtract
}

pub fn infer_latency(ctx: &Context, desc: &InstructionDesc) -> Result<LatencyResult, InferenceError> {
    let mut result = LatencyResult::default();
    let sources: Vec<usize> = desc.sources().map(|o| o.index).collect();
    let dests: Vec<usize> = desc.destinations().map(|o| o.index).collect();
    for &s in &sources {
        for &d in &dests {
            let plan = latency_kernels(desc, s, d, ctx.catalog, ctx.lib)?;
            let kernels = match plan {
                LatencyPlan::Unchainable(why) => {
                    result.pairs.insert((s, d), PairLatency::Unchainable(why));
                    continue;
                }
                LatencyPlan::Kernels(k) => k,
            };
            let supported: Vec<_> = kernels
                .into_iter()
                .filter(|k| ctx.backend.supports_kernel(&k.kernel))
                .collect();
            if supported.is_empty() {
                result.pairs.insert(
                    (s, d),
                    PairLatency::Unchainable("no chain instruction is supported by the backend".into()),
                );
                continue;
            }
            // Best value per (same-register, value class).
            let mut best: BTreeMap<(bool, Option<ValueClass>), LatencyValue> = BTreeMap::new();
            for k in supported {
                let m = measure(&k.kernel, ctx)?;
                let chain = k.kernel.chain.as_ref().expect("latency kernel");
                let label = if chain.chain_instrs.is_empty() {
                    k.variant.clone()
                } else {
                    format!("{}: {}", k.variant, chain.chain_instrs.join(" "))
                };
                let v = LatencyValue {
                    kind: k.kind,
                    cycles: per_link(&k.kernel, &m),
                    chain: label,
                    same_register: k.same_register,
                    value_class: k.value_class,
                };
                let slot = best.entry((v.same_register, v.value_class));
                match slot {
                    std::collections::btree_map::Entry::Vacant(e) => {
                        e.insert(v);
                    }
                    std::collections::btree_map::Entry::Occupied(mut e) => {
                        let cur = e.get();
                        if (kind_rank(v.kind), v.cycles) < (kind_rank(cur.kind), cur.cycles) {
                            e.insert(v);
                        }
                    }
                }
            }
            result.pairs.insert((s, d), PairLatency::Values(best.into_values().collect()));
        }
    }
    Ok(result)
}

/// Rounds to the nearest integer if within the tolerance.
fn round_count(v: Rational) -> Option<i64> {
    let r = rational::round(&v);
    ((v - int(r)).abs() <= ROUNDING_TOLERANCE).then_some(r)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortUsageInference {
    pub usage: PortUsage,
    pub total_uops: u32,
    pub isolation_ports: PortSet,
    pub block_rep: usize,
    /// Raw uops on the probed ports per combination, before subtraction.
    pub probes: Vec<(PortSet, Rational)>,
}

/// blockRep for a given maximum latency.
pub fn block_rep(max_latency: Option<Rational>) -> usize {
    let lat = max_latency.unwrap_or(int(DEFAULT_LATENCY_CAP));
    let lat = rational::ceil(&lat).max(1);
    8 * lat as usize
}

pub fn infer_port_usage(
    ctx: &Context,
    desc: &InstructionDesc,
    table: &BlockingTable,
    max_latency: Option<Rational>,
) -> Result<PortUsageInference, InferenceError> {
    const ISOLATION: usize = 8;
    let iso = measure(&isolation_kernel(desc, ISOLATION, ctx.catalog, ctx.lib)?, ctx)?.scaled(ISOLATION as i64);
    let dispatched = iso.dispatched_uops();
    let total = round_count(dispatched).ok_or_else(|| InferenceError::FractionalUops {
        instr: desc.id.clone(),
        value: rational::format(&dispatched),
    })?;
    let used = iso.used_ports();
    let rep = block_rep(max_latency);
    let mut combos: Vec<PortSet> = table.entries.keys().copied().filter(|c| c.is_subset(used)).collect();
    combos.sort_by_key(|c| (c.len(), *c));
    let mut usage = PortUsage::new();
    let mut probes = Vec::new();
    let mut attributed: i64 = 0;
    for pc in combos {
        if attributed >= total {
            break;
        }
        let entry = table.get(pc).expect("combination from the table");
        let blocker = ctx
            .catalog
            .get(&entry.instr)
            .ok_or_else(|| GenError::UnknownInstruction(entry.instr.clone()))?;
        let kernel = port_probe(desc, blocker, rep, ctx.catalog)?;
        let m = measure(&kernel, ctx)?;
        let raw = m.uops_on(pc);
        probes.push((pc, raw));
        let mut rest = raw - int(rep as i64) * entry.uops_on_ports;
        for (sub, count) in usage.entries() {
            if sub.is_strict_subset(pc) {
                rest -= int(count as i64);
            }
        }
        let inconsistent = || InferenceError::Inconsistent {
            instr: desc.id.clone(),
            ports: pc.to_string(),
            value: rational::format(&rest),
            raw: rational::format(&raw),
            block_rep: rep,
        };
        let n = round_count(rest).ok_or_else(inconsistent)?;
        if n < 0 {
            return Err(inconsistent());
        }
        if n > 0 {
            usage.add(pc, n as u32);
            attributed += n;
        }
    }
    Ok(PortUsageInference {
        usage,
        total_uops: total as u32,
        isolation_ports: used,
        block_rep: rep,
        probes,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasuredThroughput {
    pub cycles: Rational,
    /// Description of the winning kernel.
    pub winner: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThroughputMeasurement {
    pub best: MeasuredThroughput,
    pub value_classes: BTreeMap<ValueClass, MeasuredThroughput>,
}

pub fn measure_throughput(ctx: &Context, desc: &InstructionDesc) -> Result<ThroughputMeasurement, InferenceError> {
    let kernels = throughput_kernels(desc, ctx.catalog, ctx.lib)?;
    let mut best: Option<MeasuredThroughput> = None;
    let mut classes: BTreeMap<ValueClass, MeasuredThroughput> = BTreeMap::new();
    for k in kernels.iter().filter(|k| ctx.backend.supports_kernel(&k.kernel)) {
        let m = measure(&k.kernel, ctx)?;
        let cycles = m.cycles / int(k.length as i64);
        let mut winner = format!("length={}", k.length);
        if k.with_breakers {
            winner.push_str(" breakers");
        }
        if let Some(c) = k.value_class {
            winner.push_str(&format!(" class={}", c.as_str()));
        }
        let cand = MeasuredThroughput { cycles, winner };
        if best.as_ref().map_or(true, |b| cand.cycles < b.cycles) {
            best = Some(cand.clone());
        }
        if let Some(c) = k.value_class {
            let cur = classes.get(&c);
            if cur.map_or(true, |b| cand.cycles < b.cycles) {
                classes.insert(c, cand);
            }
        }
    }
    let best = best.ok_or_else(|| GenError::UnknownInstruction(desc.id.clone()))?;
    Ok(ThroughputMeasurement {
        best,
        value_classes: classes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum NotComputable {
    #[error("throughput of divider instructions does not follow from port usage")]
    Divider,
}

/// Throughput implied by the port usage alone.
pub fn compute_throughput(pu: &PortUsage, divider: bool) -> Result<Rational, NotComputable> {
    if divider {
        return Err(NotComputable::Divider);
    }
    Ok(min_max_load(pu))
}

/// Whether using the same register for all sources breaks the dependency.
pub fn detect_zero_idiom(ctx: &Context, desc: &InstructionDesc) -> Result<bool, InferenceError> {
    let Some(kernel) = zero_idiom_probe(desc, ctx.catalog, ctx.lib)? else {
        return Ok(false);
    };
    if !ctx.backend.supports_kernel(&kernel) {
        return Ok(false);
    }
    let m = measure(&kernel, ctx)?;
    let chain = kernel.chain.as_ref().expect("probe has a chain");
    Ok(m.cycles < chain.subtract)
}

/// Whether the instruction uses the divider, which makes the port-usage
/// throughput bound invalid.
pub fn uses_divider(desc: &InstructionDesc) -> bool {
    desc.has(Attribute::UsesDivider)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThroughputResult {
    pub measured: MeasuredThroughput,
    /// `None` when the port usage does not determine the throughput.
    pub computed: Option<Rational>,
    pub value_classes: BTreeMap<ValueClass, MeasuredThroughput>,
}

impl ThroughputResult {
    pub fn new(measured: ThroughputMeasurement, pu: &PortUsage, divider: bool) -> Self {
        ThroughputResult {
            measured: measured.best,
            computed: compute_throughput(pu, divider).ok(),
            value_classes: measured.value_classes,
        }
    }
}
