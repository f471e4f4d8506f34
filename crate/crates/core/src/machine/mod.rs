//! Simulated out-of-order machine: description, ground truth and simulator.
//!
//! A [`MachineSpec`] is the raw description as loaded from disk. Binding it
//! to a [`Catalog`] yields a [`Machine`], which checks the ground truth
//! against the operand descriptions and precomputes what the simulator needs.

pub mod random;
mod sim;
mod xml;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::isa::{Attribute, Catalog, OperandKind};
use crate::kernel::ValueClass;
use crate::ports::{PortSet, PortUsage, MAX_PORT};

pub use sim::{execute, run_copies, run_traced, CounterSnapshot, SimError};

#[derive(Debug, Error)]
pub enum MachineError {
    #[error("cannot read machine description {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed machine description: {0}")]
    Parse(String),
    #[error("invalid machine entry `{entry}`: {reason}")]
    Validation { entry: String, reason: String },
    #[error("unknown instruction `{0}`")]
    UnknownInstruction(String),
}

fn invalid(entry: &str, reason: impl Into<String>) -> MachineError {
    MachineError::Validation {
        entry: entry.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct UopSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ports: Vec<u8>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub eliminated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divider_occupancy: Option<u32>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl UopSpec {
    pub fn on(ports: &[u8]) -> Self {
        UopSpec {
            ports: ports.to_vec(),
            ..UopSpec::default()
        }
    }

    pub fn port_set(&self) -> PortSet {
        self.ports.iter().copied().collect()
    }
}

/// Latency from reading operand `src` (in uop `consumer`) to operand `dst`
/// being available (written by uop `producer`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct LatencyEdge {
    pub src: usize,
    pub dst: usize,
    /// Defaults to the machine's load latency for memory sources.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycles: Option<u32>,
    #[serde(default)]
    pub consumer: usize,
    #[serde(default)]
    pub producer: usize,
}

impl LatencyEdge {
    pub fn new(src: usize, dst: usize, cycles: u32) -> Self {
        LatencyEdge {
            src,
            dst,
            cycles: Some(cycles),
            consumer: 0,
            producer: 0,
        }
    }

    pub fn via(mut self, consumer: usize, producer: usize) -> Self {
        self.consumer = consumer;
        self.producer = producer;
        self
    }
}

/// Behavior when two same-class register operands name the same register.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SameRegister {
    /// Result does not depend on the input (zero and ones idioms).
    #[serde(default, skip_serializing_if = "is_false")]
    pub breaks_dependency: bool,
    /// Executed without using an execution port.
    #[serde(default, skip_serializing_if = "is_false")]
    pub eliminated: bool,
    /// Replaces the regular latency edges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_edges: Option<Vec<LatencyEdge>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DividerTiming {
    pub latency: u32,
    pub occupancy: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ValueClasses {
    pub fast: DividerTiming,
    pub slow: DividerTiming,
}

impl ValueClasses {
    pub fn get(&self, class: ValueClass) -> DividerTiming {
        match class {
            ValueClass::Fast => self.fast,
            ValueClass::Slow => self.slow,
        }
    }
}

/// Execution domain, for bypass delays between integer and FP units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    Int,
    Fp,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct GroundTruthEntry {
    pub uops: Vec<UopSpec>,
    #[serde(default)]
    pub latency_edges: Vec<LatencyEdge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub same_register: Option<SameRegister>,
    /// Eliminate every k-th dynamic instance (fractional move elimination).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eliminate_every: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_classes: Option<ValueClasses>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MachineSpec {
    #[serde(default)]
    pub name: String,
    pub ports: Vec<u8>,
    #[serde(default = "default_issue_width")]
    pub issue_width: u32,
    pub functional_units: BTreeMap<String, Vec<u8>>,
    pub load_latency: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub store_forward_latency: Option<u32>,
    #[serde(default)]
    pub bypass_delay: u32,
    #[serde(default)]
    pub divider_ports: Vec<u8>,
    pub ground_truth: BTreeMap<String, GroundTruthEntry>,
}

fn default_issue_width() -> u32 {
    4
}

impl MachineSpec {
    pub fn port_set(&self) -> PortSet {
        self.ports.iter().copied().collect()
    }

    /// Distinct port combinations of the functional units.
    pub fn fu_combinations(&self) -> Vec<PortSet> {
        let mut combos: Vec<PortSet> = self
            .functional_units
            .values()
            .map(|ports| ports.iter().copied().collect())
            .collect();
        combos.sort_by_key(|c: &PortSet| (c.len(), *c));
        combos.dedup();
        combos
    }

    /// Functional-unit names using exactly `combo`.
    pub fn units_for(&self, combo: PortSet) -> Vec<&str> {
        self.functional_units
            .iter()
            .filter(|(_, ports)| ports.iter().copied().collect::<PortSet>() == combo)
            .map(|(name, _)| name.as_str())
            .collect()
    }

    pub fn validate(&self) -> Result<(), MachineError> {
        let mut seen = PortSet::EMPTY;
        for &p in &self.ports {
            if p > MAX_PORT {
                return Err(invalid("ports", format!("port {p} exceeds {MAX_PORT}")));
            }
            if seen.contains(p) {
                return Err(invalid("ports", format!("port {p} listed twice")));
            }
            seen.insert(p);
        }
        if self.ports.is_empty() {
            return Err(invalid("ports", "no ports"));
        }
        if self.issue_width < 1 {
            return Err(invalid("issue-width", "must be at least 1"));
        }
        if self.load_latency < 1 {
            return Err(invalid("load-latency", "must be at least 1"));
        }
        let known = |ports: &[u8]| ports.iter().all(|p| seen.contains(*p));
        for (name, ports) in &self.functional_units {
            if ports.is_empty() || !known(ports) {
                return Err(invalid(name, "functional unit references unknown ports"));
            }
        }
        if !known(&self.divider_ports) {
            return Err(invalid("divider-ports", "unknown port"));
        }
        let divider: PortSet = self.divider_ports.iter().copied().collect();
        for (id, entry) in &self.ground_truth {
            if entry.uops.is_empty() {
                return Err(invalid(id, "no uops"));
            }
            for (i, uop) in entry.uops.iter().enumerate() {
                if uop.eliminated && !uop.ports.is_empty() {
                    return Err(invalid(id, format!("eliminated uop {i} has ports")));
                }
                if !uop.eliminated && uop.ports.is_empty() {
                    return Err(invalid(id, format!("uop {i} has no ports")));
                }
                if !known(&uop.ports) {
                    return Err(invalid(
                        id,
                        format!("uop {i} uses a port not in {:?}", self.ports),
                    ));
                }
                if uop.divider_occupancy.is_some() && !uop.port_set().is_subset(divider) {
                    return Err(invalid(id, format!("divider uop {i} outside divider ports")));
                }
            }
            let mut edges: Vec<&LatencyEdge> = entry.latency_edges.iter().collect();
            if let Some(same) = &entry.same_register {
                edges.extend(same.latency_edges.iter().flatten());
            }
            for e in edges {
                if e.consumer >= entry.uops.len() || e.producer >= entry.uops.len() {
                    return Err(invalid(id, "latency edge references a missing uop"));
                }
                if e.consumer > e.producer {
                    return Err(invalid(id, "latency edge runs against uop order"));
                }
            }
            if entry.value_classes.is_some()
                && !entry.uops.iter().any(|u| u.divider_occupancy.is_some())
            {
                return Err(invalid(id, "value classes without a divider uop"));
            }
            if entry.eliminate_every == Some(0) {
                return Err(invalid(id, "eliminate-every must be positive"));
            }
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("machine spec serializes")
    }

    /// Hex SHA-256 of the canonical JSON form, used for result provenance.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("machine spec serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Exact port usage of an instruction, eliminated uops excluded.
    pub fn ground_truth_port_usage(&self, id: &str) -> Result<PortUsage, MachineError> {
        let entry = self
            .ground_truth
            .get(id)
            .ok_or_else(|| MachineError::UnknownInstruction(id.to_string()))?;
        Ok(PortUsage::from_entries(
            entry
                .uops
                .iter()
                .filter(|u| !u.eliminated)
                .map(|u| (u.port_set(), 1)),
        ))
    }
}

pub fn ground_truth_port_usage(machine: &MachineSpec, id: &str) -> Result<PortUsage, MachineError> {
    machine.ground_truth_port_usage(id)
}

pub fn parse_machine(text: &str) -> Result<MachineSpec, MachineError> {
    let trimmed = text.trim_start();
    let spec: MachineSpec = if trimmed.starts_with('{') {
        serde_json::from_str(trimmed).map_err(|e| MachineError::Parse(e.to_string()))?
    } else {
        xml::parse(trimmed)?
    };
    spec.validate()?;
    Ok(spec)
}

pub fn load_machine(path: impl AsRef<Path>) -> Result<MachineSpec, MachineError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MachineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_machine(&text)
}

/// Per-operand information the simulator needs.
#[derive(Debug, Clone, Copy)]
pub(crate) struct OperandInfo {
    pub kind: OperandKind,
    pub reads: bool,
    pub writes: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct ResolvedEdge {
    pub src: usize,
    pub dst: usize,
    pub cycles: u32,
    pub consumer: usize,
    pub producer: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct EdgeSet {
    pub edges: Vec<ResolvedEdge>,
    /// Per uop: spread between its slowest and fastest input edge.
    pub skew: Vec<u32>,
    /// Per uop: operands it waits for before dispatch.
    pub inputs: Vec<Vec<usize>>,
    /// Per uop: earlier uops of the same instruction it must follow.
    pub preds: Vec<Vec<usize>>,
    /// Per destination operand with edges: the uops on those edges. The
    /// result is available once all of them have completed.
    pub gates: BTreeMap<usize, Vec<usize>>,
}

impl EdgeSet {
    pub fn gate(&self, dst: usize, n_uops: usize) -> Vec<usize> {
        self.gates.get(&dst).cloned().unwrap_or_else(|| (0..n_uops).collect())
    }
}

impl EdgeSet {
    fn new(edges: Vec<ResolvedEdge>, n_uops: usize) -> Self {
        let mut lo = vec![u32::MAX; n_uops];
        let mut hi = vec![0; n_uops];
        let mut inputs = vec![Vec::new(); n_uops];
        let mut preds = vec![Vec::new(); n_uops];
        let mut gates: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for e in &edges {
            let g = gates.entry(e.dst).or_default();
            for u in [e.consumer, e.producer] {
                if !g.contains(&u) {
                    g.push(u);
                }
            }
            lo[e.consumer] = lo[e.consumer].min(e.cycles);
            hi[e.consumer] = hi[e.consumer].max(e.cycles);
            if !inputs[e.consumer].contains(&e.src) {
                inputs[e.consumer].push(e.src);
            }
            if e.consumer != e.producer && !preds[e.producer].contains(&e.consumer) {
                preds[e.producer].push(e.consumer);
            }
        }
        let skew = lo.iter().zip(&hi).map(|(l, h)| h.saturating_sub(*l)).collect();
        EdgeSet {
            edges,
            skew,
            inputs,
            preds,
            gates,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct InstrModel {
    pub operands: Vec<OperandInfo>,
    pub uops: Vec<UopSpec>,
    pub port_sets: Vec<PortSet>,
    pub edges: EdgeSet,
    pub same_edges: Option<EdgeSet>,
    pub same_register: Option<SameRegister>,
    /// Explicit register operands that may alias, grouped by class.
    pub alias_groups: Vec<Vec<usize>>,
    pub domain: Option<Domain>,
    pub eliminate_every: Option<u32>,
    pub value_classes: Option<ValueClasses>,
    pub uses_divider: bool,
}

/// A machine description bound to a catalog.
#[derive(Debug, Clone)]
pub struct Machine {
    spec: MachineSpec,
    pub(crate) models: BTreeMap<String, InstrModel>,
    digest: String,
}

impl Machine {
    pub fn new(spec: MachineSpec, catalog: &Catalog) -> Result<Self, MachineError> {
        spec.validate()?;
        let mut models = BTreeMap::new();
        for (id, entry) in &spec.ground_truth {
            let desc = catalog
                .get(id)
                .ok_or_else(|| invalid(id, "not present in the catalog"))?;
            let operands: Vec<OperandInfo> = desc
                .operands
                .iter()
                .map(|o| OperandInfo {
                    kind: o.kind,
                    reads: o.reads(),
                    writes: o.writes(),
                })
                .collect();
            let resolve = |edges: &[LatencyEdge]| -> Result<Vec<ResolvedEdge>, MachineError> {
                edges
                    .iter()
                    .map(|e| {
                        let (Some(s), Some(d)) = (operands.get(e.src), operands.get(e.dst)) else {
                            return Err(invalid(id, format!("edge {}->{} names a missing operand", e.src, e.dst)));
                        };
                        if !s.reads || s.kind == OperandKind::Immediate {
                            return Err(invalid(id, format!("edge source {} is not a readable operand", e.src)));
                        }
                        if !d.writes {
                            return Err(invalid(id, format!("edge destination {} is not written", e.dst)));
                        }
                        let cycles = match (e.cycles, s.kind) {
                            (Some(c), _) => c,
                            (None, OperandKind::Memory) => spec.load_latency,
                            (None, _) => {
                                return Err(invalid(id, format!("edge {}->{} has no cycles", e.src, e.dst)))
                            }
                        };
                        if cycles == 0
                            && !desc.has(Attribute::ZeroLatencyCapable)
                            && !entry.uops[e.consumer].eliminated
                        {
                            return Err(invalid(id, format!("edge {}->{} has zero latency", e.src, e.dst)));
                        }
                        Ok(ResolvedEdge {
                            src: e.src,
                            dst: e.dst,
                            cycles,
                            consumer: e.consumer,
                            producer: e.producer,
                        })
                    })
                    .collect()
            };
            let edges = resolve(&entry.latency_edges)?;
            for (s, so) in operands.iter().enumerate() {
                if !so.reads || so.kind == OperandKind::Immediate {
                    continue;
                }
                for (d, dop) in operands.iter().enumerate() {
                    if dop.writes && !edges.iter().any(|e| e.src == s && e.dst == d) {
                        return Err(invalid(id, format!("missing latency edge {s}->{d}")));
                    }
                }
            }
            let alias_groups = desc.same_class_register_groups();
            if entry.same_register.is_some() && alias_groups.is_empty() {
                return Err(invalid(id, "same-register behavior without aliasable operands"));
            }
            let same_edges = match entry.same_register.as_ref().and_then(|s| s.latency_edges.as_ref()) {
                Some(e) => Some(EdgeSet::new(resolve(e)?, entry.uops.len())),
                None => None,
            };
            let uses_divider = entry.uops.iter().any(|u| u.divider_occupancy.is_some());
            models.insert(
                id.clone(),
                InstrModel {
                    operands,
                    port_sets: entry.uops.iter().map(UopSpec::port_set).collect(),
                    uops: entry.uops.clone(),
                    edges: EdgeSet::new(edges, entry.uops.len()),
                    same_edges,
                    same_register: entry.same_register.clone(),
                    alias_groups,
                    domain: entry.domain,
                    eliminate_every: entry.eliminate_every,
                    value_classes: entry.value_classes,
                    uses_divider,
                },
            );
        }
        let digest = spec.digest();
        Ok(Machine {
            spec,
            models,
            digest,
        })
    }

    pub fn spec(&self) -> &MachineSpec {
        &self.spec
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn supports(&self, id: &str) -> bool {
        self.models.contains_key(id)
    }

    pub fn ground_truth_port_usage(&self, id: &str) -> Result<PortUsage, MachineError> {
        self.spec.ground_truth_port_usage(id)
    }

    /// Latency of an operand pair as the simulator realizes it without
    /// port contention: `src` becomes ready at 0, every other input long
    /// before, and the result is when `dst` becomes ready. Edges into the
    /// divider uop take the latency of `class`.
    pub fn pair_latency(&self, id: &str, src: usize, dst: usize, class: Option<ValueClass>) -> Option<u32> {
        let m = self.models.get(id)?;
        realized(m, &m.edges, src, dst, class)
    }

    /// Latency of the pair when all aliasable operands share one register,
    /// if the machine declares one.
    pub fn same_register_latency(&self, id: &str, src: usize, dst: usize) -> Option<u32> {
        let m = self.models.get(id)?;
        realized(m, m.same_edges.as_ref()?, src, dst, None)
    }

    /// Whether the same-register form is declared dependency breaking.
    pub fn breaks_dependency(&self, id: &str) -> bool {
        self.models
            .get(id)
            .and_then(|m| m.same_register.as_ref())
            .is_some_and(|s| s.breaks_dependency)
    }
}

fn realized(m: &InstrModel, edges: &EdgeSet, src: usize, dst: usize, class: Option<ValueClass>) -> Option<u32> {
    if !edges.edges.iter().any(|e| e.src == src && e.dst == dst) {
        return None;
    }
    const EARLY: i64 = -(1 << 30);
    let input = |op: usize| if op == src { 0 } else { EARLY };
    let finish = |disp: &[i64], u: usize| disp[u] + i64::from(!m.uops[u].eliminated);
    let mut disp = vec![EARLY; m.uops.len()];
    for u in 0..m.uops.len() {
        let mut t = edges.inputs[u].iter().map(|&op| input(op)).max().unwrap_or(EARLY);
        for &p in &edges.preds[u] {
            t = t.max(finish(&disp, p));
        }
        disp[u] = t;
    }
    let mut ready = edges
        .gate(dst, m.uops.len())
        .into_iter()
        .map(|u| finish(&disp, u))
        .max()
        .unwrap_or(EARLY);
    for e in edges.edges.iter().filter(|e| e.dst == dst) {
        let cycles = match (class, m.value_classes, m.uops[e.consumer].divider_occupancy) {
            (Some(c), Some(vc), Some(_)) => vc.get(c).latency,
            _ => e.cycles,
        };
        let start = disp[e.consumer] - edges.skew[e.consumer] as i64;
        ready = ready.max(finish(&disp, e.producer)).max(input(e.src).max(start) + cycles as i64);
    }
    Some(ready.max(0) as u32)
}
