//! End-to-end characterization and validation against a simulated
//! machine's ground truth.

use std::collections::BTreeMap;

use crate::bench_gen::{build_blocking_table, BlockingTable, ChainLibrary, GenError, LatencyKind};
use crate::exec::Execution;
use crate::inference::{
    calibrate, detect_zero_idiom, infer_latency, infer_port_usage, measure_throughput, uses_divider, Context,
    InferenceError, PairLatency, ThroughputResult,
};
use crate::isa::{BlockingClass, Catalog, InstructionDesc};
use crate::kernel::ValueClass;
use crate::machine::Machine;
use crate::measure::{Backend, MeasurementConfig};
use crate::ports::{PortSet, PortUsage};
use crate::rational::{self, int};
use crate::report::{CharacterizationResult, Provenance};

pub struct Session<'a> {
    catalog: &'a Catalog,
    backend: &'a dyn Backend,
    config: MeasurementConfig,
    exec: Execution,
    lib: ChainLibrary,
    tables: BTreeMap<BlockingClass, Result<BlockingTable, GenError>>,
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub results: Vec<CharacterizationResult>,
    /// Instructions that could not be characterized, with the reason.
    pub errors: Vec<(String, String)>,
}

impl<'a> Session<'a> {
    /// Calibrates the chain library and builds both blocking tables.
    pub fn new(
        catalog: &'a Catalog,
        backend: &'a dyn Backend,
        config: MeasurementConfig,
        exec: Execution,
    ) -> Result<Self, InferenceError> {
        config.validate()?;
        let lib = calibrate(catalog, backend, &config)?;
        let mut tables = BTreeMap::new();
        for class in [BlockingClass::SseSafe, BlockingClass::AvxSafe] {
            let t = build_blocking_table(catalog, &lib, backend, &config, class, exec);
            tables.insert(class, t);
        }
        Ok(Session {
            catalog,
            backend,
            config,
            exec,
            lib,
            tables,
        })
    }

    pub fn library(&self) -> &ChainLibrary {
        &self.lib
    }

    pub fn table(&self, class: BlockingClass) -> Result<&BlockingTable, &GenError> {
        self.tables[&class].as_ref()
    }

    /// Swaps the blocker of one combination in both tables.
    pub fn override_blocker(&mut self, ports: PortSet, instr: &str) -> bool {
        let mut any = false;
        for t in self.tables.values_mut().flatten() {
            any |= t.override_blocker(ports, instr);
        }
        any
    }

    fn context(&self) -> Context<'_> {
        Context {
            catalog: self.catalog,
            lib: &self.lib,
            backend: self.backend,
            config: self.config,
        }
    }

    pub fn characterize(&self, desc: &InstructionDesc) -> Result<CharacterizationResult, InferenceError> {
        let ctx = self.context();
        let table = self
            .table(BlockingClass::for_isa(desc.isa_class))
            .map_err(|e| InferenceError::Gen(e.clone()))?;
        let latency = infer_latency(&ctx, desc)?;
        let pu = infer_port_usage(&ctx, desc, table, latency.max_latency())?;
        let tp = measure_throughput(&ctx, desc)?;
        let zero_idiom = detect_zero_idiom(&ctx, desc)?;
        Ok(CharacterizationResult {
            id: desc.id.clone(),
            throughput: ThroughputResult::new(tp, &pu.usage, uses_divider(desc)),
            port_usage: pu.usage,
            total_uops: pu.total_uops,
            latency,
            zero_idiom,
            provenance: Provenance {
                backend: self.backend.id(),
                machine_digest: self.backend.machine_digest(),
                config: self.config,
            },
        })
    }

    /// Characterizes the given instructions, skipping ones the backend
    /// cannot execute.
    pub fn run(&self, ids: &[String]) -> Outcome {
        let descs: Vec<&InstructionDesc> = ids
            .iter()
            .filter_map(|id| self.catalog.get(id))
            .filter(|d| self.backend.supports(&d.id))
            .collect();
        let done = self.exec.map(&descs, |d| self.characterize(d));
        let mut out = Outcome::default();
        for (d, r) in descs.iter().zip(done) {
            match r {
                Ok(r) => out.results.push(r),
                Err(e) => out.errors.push((d.id.clone(), e.to_string())),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub id: String,
    pub what: String,
    pub expected: String,
    pub actual: String,
}

/// Whether two uops of one instruction compete for a port. Chains of such
/// instructions can be slowed by port binding, so their exact latencies may
/// exceed the dataflow value by up to one cycle.
fn self_contending(usage: &PortUsage) -> bool {
    let entries: Vec<_> = usage.entries().collect();
    entries.iter().enumerate().any(|(i, (p, n))| {
        *n > 1 || entries[i + 1..].iter().any(|(q, _)| !p.intersection(*q).is_empty())
    })
}

/// Compares results with the machine's declared behavior: port usage,
/// exact latencies (including value classes and declared same-register
/// latencies), upper bounds and zero idioms.
pub fn validate(results: &[CharacterizationResult], machine: &Machine) -> Vec<Mismatch> {
    let mut out = Vec::new();
    let mut miss = |id: &str, what: String, expected: String, actual: String| {
        out.push(Mismatch {
            id: id.to_string(),
            what,
            expected,
            actual,
        })
    };
    for r in results {
        let id = r.id.as_str();
        match machine.ground_truth_port_usage(id) {
            Ok(gt) if gt == r.port_usage => {}
            Ok(gt) => miss(id, "port usage".into(), gt.to_string(), r.port_usage.to_string()),
            Err(e) => miss(id, "port usage".into(), e.to_string(), r.port_usage.to_string()),
        }
        let contended = machine.ground_truth_port_usage(id).map(|u| self_contending(&u)).unwrap_or(false);
        let breaks = machine.breaks_dependency(id);
        if breaks != r.zero_idiom {
            miss(id, "zero idiom".into(), breaks.to_string(), r.zero_idiom.to_string());
        }
        for ((s, d), pair) in &r.latency.pairs {
            let PairLatency::Values(values) = pair else { continue };
            for v in values {
                let what = format!("latency {s}->{d} {}{}", v.kind.as_str(), match (v.same_register, v.value_class) {
                    (true, _) => " same-register".to_string(),
                    (_, Some(c)) => format!(" {}", c.as_str()),
                    _ => String::new(),
                });
                let expected = if v.same_register {
                    machine.same_register_latency(id, *s, *d)
                } else {
                    machine.pair_latency(id, *s, *d, v.value_class)
                };
                let Some(expected) = expected else { continue };
                let expected = int(expected as i64);
                let ok = match v.kind {
                    LatencyKind::Exact if contended => v.cycles >= expected && v.cycles <= expected + int(1),
                    LatencyKind::Exact => v.cycles == expected,
                    LatencyKind::UpperBound => v.cycles >= expected,
                    LatencyKind::RoundTrip | LatencyKind::ZeroIdiomFastPath => true,
                };
                if !ok {
                    miss(id, what, rational::format(&expected), rational::format(&v.cycles));
                }
            }
        }
        if let Some(slow) = r.throughput.value_classes.get(&ValueClass::Slow) {
            if let Some(fast) = r.throughput.value_classes.get(&ValueClass::Fast) {
                if slow.cycles < fast.cycles {
                    miss(
                        id,
                        "value-class throughput order".into(),
                        "slow >= fast".into(),
                        format!("{} < {}", rational::format(&slow.cycles), rational::format(&fast.cycles)),
                    );
                }
            }
        }
    }
    out
}
