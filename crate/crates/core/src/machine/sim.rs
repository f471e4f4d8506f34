//! Event-driven port-model simulator.
//!
//! The front end issues `issue-width` uops per cycle in program order into an
//! unbounded scheduler, so the issue cycle of every uop is known up front.
//! Each non-eliminated uop is bound to a port when it issues (least
//! cumulative load, then lowest port index). Every cycle each port dispatches
//! the oldest of its ready uops; divider uops additionally wait for the
//! port's non-pipelined divider.
//!
//! Operand timing follows the per-operand-pair latency edges of the ground
//! truth: when the consumer uop of an edge dispatches at `d`, the destination
//! becomes ready no earlier than `max(t_src, d - skew) + cycles`, where
//! `skew` lets operands with shorter latencies enter the uop later.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use thiserror::Error;

use super::{EdgeSet, InstrModel, Machine};
use crate::isa::OperandKind;
use crate::kernel::{Binding, InitTarget, Kernel, ValueClass};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CounterSnapshot {
    pub cycles: u64,
    pub uops_per_port: BTreeMap<u8, u64>,
    /// All uops, including eliminated ones.
    pub total_uops: u64,
}

impl CounterSnapshot {
    pub fn dispatched_uops(&self) -> u64 {
        self.uops_per_port.values().sum()
    }

    pub fn eliminated_uops(&self) -> u64 {
        self.total_uops - self.dispatched_uops()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("instruction `{0}` has no ground truth on this machine")]
    UnknownInstruction(String),
    #[error("instance {instance} (`{id}`): operand {operand} is not bound correctly")]
    UnboundOperand {
        instance: usize,
        id: String,
        operand: usize,
    },
}

/// Runs the kernel once. The model has no caches or predictors, so a warm-up
/// pass could not change the outcome and is not simulated.
pub fn execute(machine: &Machine, kernel: &Kernel, _warm_up: bool) -> Result<CounterSnapshot, SimError> {
    run_copies(machine, kernel, 1)
}

/// Runs `copies` back-to-back copies of the kernel body.
pub fn run_copies(machine: &Machine, kernel: &Kernel, copies: usize) -> Result<CounterSnapshot, SimError> {
    let prepared = Prepared::new(machine, kernel)?;
    Ok(Sim::new(machine, &prepared, copies, false).run().0)
}

/// Like [`run_copies`], also returning every dispatch as `(cycle, port)`.
pub fn run_traced(
    machine: &Machine,
    kernel: &Kernel,
    copies: usize,
) -> Result<(CounterSnapshot, Vec<(u64, u8)>), SimError> {
    let prepared = Prepared::new(machine, kernel)?;
    Ok(Sim::new(machine, &prepared, copies, true).run())
}

const NONE: u32 = u32::MAX;
const UNRESOLVED: u64 = u64::MAX;
const NO_PORT: u8 = u8::MAX;

fn shift(t: u64, offset: i64) -> u64 {
    (t as i64 + offset).max(0) as u64
}

#[derive(Clone, Copy)]
enum Loc {
    Reg(u32),
    Mem { slot: u32, base: u32 },
    Imm,
}

struct PreparedInstance<'m> {
    model: &'m InstrModel,
    model_idx: usize,
    locs: Vec<Loc>,
    /// Operands whose dependency is broken by a same-register idiom.
    broken: Vec<bool>,
    same: bool,
}

struct Prepared<'m> {
    instances: Vec<PreparedInstance<'m>>,
    n_locs: usize,
    init: Vec<(u32, ValueClass)>,
    n_models: usize,
}

impl<'m> Prepared<'m> {
    fn new(machine: &'m Machine, kernel: &Kernel) -> Result<Self, SimError> {
        let mut names: HashMap<String, u32> = HashMap::new();
        let mut intern = |name: String| -> u32 {
            let next = names.len() as u32;
            *names.entry(name).or_insert(next)
        };
        let flags = intern("FLAGS".to_string());
        let model_ids: HashMap<&str, usize> = machine
            .models
            .keys()
            .enumerate()
            .map(|(i, k)| (k.as_str(), i))
            .collect();
        let mut instances = Vec::with_capacity(kernel.instances.len());
        for (pos, inst) in kernel.instances.iter().enumerate() {
            let model = machine
                .models
                .get(&inst.id)
                .ok_or_else(|| SimError::UnknownInstruction(inst.id.clone()))?;
            let unbound = |operand| SimError::UnboundOperand {
                instance: pos,
                id: inst.id.clone(),
                operand,
            };
            if inst.bindings.len() != model.operands.len() {
                return Err(unbound(inst.bindings.len().min(model.operands.len())));
            }
            let mut locs = Vec::with_capacity(model.operands.len());
            for (i, (op, binding)) in model.operands.iter().zip(&inst.bindings).enumerate() {
                let loc = match (op.kind, binding) {
                    (OperandKind::Flags, Binding::Flags) => Loc::Reg(flags),
                    (OperandKind::Immediate, Binding::Imm(_)) => Loc::Imm,
                    (OperandKind::Memory, Binding::Mem { slot, base }) => Loc::Mem {
                        slot: intern(format!("[slot{slot}]")),
                        base: intern(base.clone()),
                    },
                    (k, Binding::Reg { base, .. }) if k.is_register() => Loc::Reg(intern(base.clone())),
                    _ => return Err(unbound(i)),
                };
                locs.push(loc);
            }
            let mut broken = vec![false; locs.len()];
            for group in &model.alias_groups {
                for &a in group {
                    for &b in group {
                        if a != b
                            && model.operands[a].reads
                            && model.operands[b].reads
                            && inst.bindings[a].base() == inst.bindings[b].base()
                        {
                            broken[a] = true;
                        }
                    }
                }
            }
            let same = broken.iter().any(|&b| b) && model.same_register.is_some();
            let breaks = model
                .same_register
                .as_ref()
                .is_some_and(|s| s.breaks_dependency);
            if !(same && breaks) {
                broken.iter_mut().for_each(|b| *b = false);
            }
            instances.push(PreparedInstance {
                model,
                model_idx: model_ids[inst.id.as_str()],
                locs,
                broken,
                same,
            });
        }
        let init = kernel
            .init
            .iter()
            .map(|(target, class)| {
                let key = match target {
                    InitTarget::Reg(base) => base.clone(),
                    InitTarget::Mem(slot) => format!("[slot{slot}]"),
                };
                (intern(key), *class)
            })
            .collect();
        Ok(Prepared {
            instances,
            n_locs: names.len(),
            init,
            n_models: machine.models.len(),
        })
    }
}

struct Value {
    ready: u64,
    slow: bool,
    from_store: bool,
    domain: Option<super::Domain>,
    waiters: u32,
}

struct Uop {
    inst: u32,
    local: u16,
    port: u8,
    eliminated: bool,
    divider: bool,
    occupancy: u32,
    pending: u32,
    ready_at: u64,
    disp: u64,
}

struct Inst<'m> {
    pre: &'m PreparedInstance<'m>,
    issue: u64,
    first_uop: u32,
    remaining: u32,
    /// Written operands whose value is already resolved, as a bit mask.
    resolved: u64,
    eliminated: bool,
    slow: bool,
    /// Per operand: (read value, base value for memory, written value).
    vals: Vec<(u32, u32, u32)>,
}

impl Inst<'_> {
    fn edges(&self) -> &EdgeSet {
        match (&self.pre.model.same_edges, self.pre.same) {
            (Some(e), true) => e,
            _ => &self.pre.model.edges,
        }
    }
}

struct Sim<'m> {
    machine: &'m Machine,
    values: Vec<Value>,
    /// Linked waiter lists: (uop, time offset, next).
    waiters: Vec<(u32, i64, u32)>,
    uops: Vec<Uop>,
    insts: Vec<Inst<'m>>,
    timed: BinaryHeap<Reverse<(u64, u32)>>,
    port_heaps: Vec<BinaryHeap<Reverse<u32>>>,
    div_heaps: Vec<BinaryHeap<Reverse<u32>>>,
    div_busy: Vec<u64>,
    counts: Vec<u64>,
    last: u64,
    done_uops: usize,
    trace: Option<Vec<(u64, u8)>>,
}

impl<'m> Sim<'m> {
    fn new(machine: &'m Machine, prepared: &'m Prepared<'m>, copies: usize, trace: bool) -> Self {
        let spec = machine.spec();
        let width = spec.issue_width as u64;
        let mut sim = Sim {
            machine,
            values: Vec::new(),
            waiters: Vec::new(),
            uops: Vec::new(),
            insts: Vec::with_capacity(prepared.instances.len() * copies),
            timed: BinaryHeap::new(),
            port_heaps: (0..64).map(|_| BinaryHeap::new()).collect(),
            div_heaps: (0..64).map(|_| BinaryHeap::new()).collect(),
            div_busy: vec![0; 64],
            counts: vec![0; 64],
            last: 0,
            done_uops: 0,
            trace: trace.then(Vec::new),
        };

        // Initial architectural values, all ready at cycle 0.
        let mut current: Vec<u32> = (0..prepared.n_locs as u32).collect();
        for _ in 0..prepared.n_locs {
            sim.values.push(Value {
                ready: 0,
                slow: false,
                from_store: false,
                domain: None,
                waiters: NONE,
            });
        }
        for &(loc, class) in &prepared.init {
            sim.values[loc as usize].slow = class == ValueClass::Slow;
        }

        let mut bound = [0u64; 64];
        let mut dynamic_count = vec![0u32; prepared.n_models];
        for _ in 0..copies {
            for pre in &prepared.instances {
                sim.rename(pre, &mut current, &mut bound, &mut dynamic_count, width);
            }
        }
        sim
    }

    /// Renames one instance, binds its uops to ports and registers waiters.
    fn rename(
        &mut self,
        pre: &'m PreparedInstance<'m>,
        current: &mut [u32],
        bound: &mut [u64; 64],
        dynamic_count: &mut [u32],
        width: u64,
    ) {
        let model = pre.model;
        let inst_idx = self.insts.len() as u32;
        let first_uop = self.uops.len() as u32;
        dynamic_count[pre.model_idx] += 1;
        let eliminated = model
            .eliminate_every
            .is_some_and(|k| dynamic_count[pre.model_idx] % k == 0)
            || (pre.same && model.same_register.as_ref().is_some_and(|s| s.eliminated));

        let mut vals = vec![(NONE, NONE, NONE); model.operands.len()];
        let mut slow = false;
        for (i, (op, loc)) in model.operands.iter().zip(&pre.locs).enumerate() {
            if !op.reads || pre.broken[i] {
                continue;
            }
            match *loc {
                Loc::Reg(r) => {
                    vals[i].0 = current[r as usize];
                    if op.kind != OperandKind::Flags {
                        slow |= self.values[current[r as usize] as usize].slow;
                    }
                }
                Loc::Mem { slot, base } => {
                    vals[i].0 = current[slot as usize];
                    vals[i].1 = current[base as usize];
                    slow |= self.values[current[slot as usize] as usize].slow;
                }
                Loc::Imm => {}
            }
        }
        let out_slow = slow && !model.uses_divider;
        for (i, (op, loc)) in model.operands.iter().zip(&pre.locs).enumerate() {
            if !op.writes {
                continue;
            }
            let target = match *loc {
                Loc::Reg(r) => r,
                Loc::Mem { slot, .. } => slot,
                Loc::Imm => continue,
            };
            let id = self.values.len() as u32;
            self.values.push(Value {
                ready: UNRESOLVED,
                slow: out_slow,
                from_store: op.kind == OperandKind::Memory,
                domain: model.domain,
                waiters: NONE,
            });
            current[target as usize] = id;
            vals[i].2 = id;
        }

        let inst = Inst {
            pre,
            issue: first_uop as u64 / width,
            first_uop,
            remaining: model.uops.len() as u32,
            resolved: 0,
            eliminated,
            slow,
            vals,
        };
        let edges = inst.edges();
        let mut new_uops = Vec::with_capacity(model.uops.len());
        let mut waits = Vec::new();
        for (local, spec) in model.uops.iter().enumerate() {
            let seq = first_uop + local as u32;
            let elim = eliminated || spec.eliminated;
            let port = if elim {
                NO_PORT
            } else {
                let p = model.port_sets[local]
                    .iter()
                    .min_by_key(|&p| (bound[p as usize], p))
                    .expect("non-empty port set");
                bound[p as usize] += 1;
                p
            };
            let occupancy = match (&model.value_classes, spec.divider_occupancy) {
                (_, None) => 0,
                (Some(vc), Some(_)) => {
                    if slow {
                        vc.slow.occupancy
                    } else {
                        vc.fast.occupancy
                    }
                }
                (None, Some(o)) => o,
            };
            let mut uop = Uop {
                inst: inst_idx,
                local: local as u16,
                port,
                eliminated: elim,
                divider: spec.divider_occupancy.is_some() && !elim,
                occupancy,
                pending: edges.preds[local].len() as u32,
                ready_at: seq as u64 / width,
                disp: UNRESOLVED,
            };
            for &src in &edges.inputs[local] {
                let (v, b, _) = inst.vals[src];
                let slot_offset = if b != NONE { self.forward_offset(v) } else { 0 };
                for (v, offset) in [(v, slot_offset), (b, 0)] {
                    if v == NONE {
                        continue;
                    }
                    let value = &self.values[v as usize];
                    if value.ready == UNRESOLVED {
                        uop.pending += 1;
                        waits.push((v, offset, seq));
                    } else {
                        uop.ready_at = uop.ready_at.max(shift(value.ready, offset));
                    }
                }
            }
            new_uops.push(uop);
        }
        for (v, offset, seq) in waits {
            let node = self.waiters.len() as u32;
            self.waiters.push((seq, offset, self.values[v as usize].waiters));
            self.values[v as usize].waiters = node;
        }
        for uop in new_uops {
            if uop.pending == 0 {
                self.timed.push(Reverse((uop.ready_at, self.uops.len() as u32)));
            }
            self.uops.push(uop);
        }
        self.insts.push(inst);
    }

    fn run(mut self) -> (CounterSnapshot, Vec<(u64, u8)>) {
        let total = self.uops.len();
        let ports: Vec<u8> = self.machine.spec().ports.clone();
        let mut t = 0u64;
        while self.done_uops < total {
            while let Some(&Reverse((time, seq))) = self.timed.peek() {
                if time > t {
                    break;
                }
                self.timed.pop();
                let uop = &self.uops[seq as usize];
                if uop.eliminated {
                    let at = uop.ready_at;
                    self.dispatch(seq, at);
                } else if uop.divider {
                    self.div_heaps[uop.port as usize].push(Reverse(seq));
                } else {
                    self.port_heaps[uop.port as usize].push(Reverse(seq));
                }
            }
            let mut waiting = false;
            for &p in &ports {
                let p = p as usize;
                let normal = self.port_heaps[p].peek().map(|r| r.0);
                let div = if self.div_busy[p] <= t {
                    self.div_heaps[p].peek().map(|r| r.0)
                } else {
                    None
                };
                let pick = match (normal, div) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                };
                if let Some(seq) = pick {
                    if Some(seq) == normal {
                        self.port_heaps[p].pop();
                    } else {
                        self.div_heaps[p].pop();
                        self.div_busy[p] = t + self.uops[seq as usize].occupancy as u64;
                    }
                    self.counts[p] += 1;
                    if let Some(trace) = &mut self.trace {
                        trace.push((t, p as u8));
                    }
                    self.dispatch(seq, t);
                }
                waiting |= !self.port_heaps[p].is_empty() || !self.div_heaps[p].is_empty();
            }
            if self.done_uops == total {
                break;
            }
            t = if waiting {
                t + 1
            } else {
                match self.timed.peek() {
                    Some(&Reverse((time, _))) => time.max(t + 1),
                    None => panic!("simulator stalled with {} uops outstanding", total - self.done_uops),
                }
            };
        }
        let uops_per_port = self
            .machine
            .spec()
            .ports
            .iter()
            .map(|&p| (p, self.counts[p as usize]))
            .collect();
        let snapshot = CounterSnapshot {
            cycles: self.last,
            uops_per_port,
            total_uops: total as u64,
        };
        (snapshot, self.trace.unwrap_or_default())
    }

    fn dispatch(&mut self, seq: u32, at: u64) {
        self.done_uops += 1;
        let (inst_idx, local, eliminated) = {
            let u = &mut self.uops[seq as usize];
            u.disp = at;
            (u.inst as usize, u.local as usize, u.eliminated)
        };
        let done = at + u64::from(!eliminated);
        self.last = self.last.max(done);
        let inst = &mut self.insts[inst_idx];
        inst.remaining -= 1;
        let first = inst.first_uop;
        let edges = inst.edges();
        let n = inst.pre.model.uops.len();
        for later in local + 1..n {
            if edges.preds[later].contains(&local) {
                let s = first + later as u32;
                let u = &mut self.uops[s as usize];
                u.ready_at = u.ready_at.max(done);
                u.pending -= 1;
                if u.pending == 0 {
                    let r = u.ready_at;
                    self.timed.push(Reverse((r, s)));
                }
            }
        }
        self.complete(inst_idx);
    }

    /// Extra (or saved) cycles when a load reads a slot written by a store
    /// of the same run, relative to a regular load.
    fn forward_offset(&self, slot_value: u32) -> i64 {
        let spec = self.machine.spec();
        match (self.values[slot_value as usize].from_store, spec.store_forward_latency) {
            (true, Some(f)) => f as i64 - spec.load_latency as i64,
            _ => 0,
        }
    }

    fn finish_time(&self, seq: u32) -> u64 {
        let u = &self.uops[seq as usize];
        u.disp + u64::from(!u.eliminated)
    }

    /// Resolves every written operand whose edge uops have all dispatched.
    fn complete(&mut self, inst_idx: usize) {
        let spec = self.machine.spec();
        let inst = &self.insts[inst_idx];
        let model = inst.pre.model;
        let edges = inst.edges();
        let n_uops = model.uops.len();
        let mut results = Vec::new();
        let mut resolved = inst.resolved;
        for (d, op) in model.operands.iter().enumerate() {
            let target = inst.vals[d].2;
            if !op.writes || target == NONE || resolved & (1 << d) != 0 {
                continue;
            }
            let gate = edges.gate(d, n_uops);
            let first = inst.first_uop;
            if gate.iter().any(|&u| self.uops[(first + u as u32) as usize].disp == UNRESOLVED) {
                continue;
            }
            resolved |= 1 << d;
            let mut ready = gate.iter().map(|&u| self.finish_time(first + u as u32)).max().unwrap_or(0);
            for e in edges.edges.iter().filter(|e| e.dst == d) {
                let consumer = first + e.consumer as u32;
                let cu = &self.uops[consumer as usize];
                let cycles = if inst.eliminated {
                    0
                } else {
                    let c = match (&model.value_classes, cu.divider) {
                        (Some(vc), true) => {
                            if inst.slow {
                                vc.slow.latency
                            } else {
                                vc.fast.latency
                            }
                        }
                        _ => e.cycles,
                    };
                    c as u64
                };
                let skew = if inst.eliminated { 0 } else { edges.skew[e.consumer] as u64 };
                let start = cu.disp.saturating_sub(skew);
                let (v, base, _) = inst.vals[e.src];
                let contribution = if v == NONE {
                    // Dependency broken by a same-register idiom.
                    inst.issue.max(start) + cycles
                } else if base != NONE {
                    let slot = shift(self.values[v as usize].ready, self.forward_offset(v));
                    let base_ready = self.values[base as usize].ready;
                    base_ready.max(slot).max(start) + cycles
                } else {
                    let value = &self.values[v as usize];
                    let bypass = match (value.domain, model.domain) {
                        (Some(a), Some(b)) if a != b => spec.bypass_delay as u64,
                        _ => 0,
                    };
                    (value.ready + bypass).max(start) + cycles
                };
                ready = ready.max(contribution);
            }
            results.push((target, ready));
        }
        self.insts[inst_idx].resolved = resolved;
        for (target, ready) in results {
            self.resolve(target, ready);
        }
    }

    fn resolve(&mut self, value: u32, ready: u64) {
        self.last = self.last.max(ready);
        let v = &mut self.values[value as usize];
        v.ready = ready;
        let mut node = v.waiters;
        while node != NONE {
            let (seq, offset, next) = self.waiters[node as usize];
            let u = &mut self.uops[seq as usize];
            u.ready_at = u.ready_at.max(shift(ready, offset));
            u.pending -= 1;
            if u.pending == 0 {
                let r = u.ready_at;
                self.timed.push(Reverse((r, seq)));
            }
            node = next;
        }
    }
}
