mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use uarch_probe::kernel::{Binding, Instance, Kernel};
use uarch_probe::machine::{execute, run_copies, run_traced, Machine};

use common::*;

fn self_chain(id: &str, reg: &str, k: usize) -> Kernel {
    let inst = Instance {
        id: id.to_string(),
        bindings: vec![Binding::reg(reg, reg), Binding::reg(reg, reg), Binding::Flags],
    };
    Kernel::new(vec![inst; k])
}

#[test]
fn independent_two_port_uops_alternate() {
    let (catalog, machine) = reference();
    // LEA is the single-uop {0,1} instruction on the reference machine.
    let kernel = independent(&catalog, "LEA_R64_M", 100);
    let (snap, trace) = run_traced(&machine, &kernel, 1).unwrap();
    // Dispatch itself is dense; the rest is pipeline fill and drain.
    let first = trace.iter().map(|t| t.0).min().unwrap();
    let last = trace.iter().map(|t| t.0).max().unwrap();
    assert_eq!(last - first + 1, 50);
    assert!((50..=55).contains(&snap.cycles), "{} cycles", snap.cycles);
    assert_eq!(snap.uops_per_port.get(&0), Some(&50));
    assert_eq!(snap.uops_per_port.get(&1), Some(&50));
    assert_eq!(snap.total_uops, 100);
}

#[test]
fn serial_chain_runs_at_latency() {
    let (_, machine) = reference();
    // IMUL R, R has latency 3 on every edge.
    for k in [1usize, 5, 40] {
        let snap = execute(&machine, &self_chain("IMUL_R64_R64", "RBX", k), false).unwrap();
        let k = k as u64;
        assert!(snap.cycles >= 3 * k && snap.cycles <= 3 * k + 2, "k={k}: {}", snap.cycles);
    }
}

#[test]
fn empty_kernel_is_free() {
    let (_, machine) = reference();
    let snap = execute(&machine, &Kernel::default(), true).unwrap();
    assert_eq!(snap.cycles, 0);
    assert_eq!(snap.total_uops, 0);
    assert!(snap.uops_per_port.values().all(|&n| n == 0));
}

#[test]
fn eliminated_move_uses_no_port() {
    let (catalog, machine) = reference();
    let snap = execute(&machine, &independent(&catalog, "MOV_R64_R64", 8), false).unwrap();
    assert_eq!(snap.total_uops, 8);
    assert_eq!(snap.dispatched_uops(), 0);
    assert_eq!(snap.eliminated_uops(), 8);
}

#[test]
fn unknown_instruction_is_rejected() {
    let (catalog, _) = reference();
    let mut spec = reference_spec();
    spec.ground_truth.remove("ADD_R64_R64");
    let machine = Machine::new(spec, &catalog).unwrap();
    assert!(execute(&machine, &independent(&catalog, "ADD_R64_R64", 1), false).is_err());
}

fn simulated_ids(machine: &Machine) -> Vec<String> {
    machine.spec().ground_truth.keys().cloned().collect()
}

fn kernel_strategy() -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0usize..64, 1usize..5), 1..4)
}

fn build(catalog: &uarch_probe::isa::Catalog, ids: &[String], parts: &[(usize, usize)]) -> Kernel {
    let mut k = Kernel::default();
    for &(i, n) in parts {
        let part = independent(catalog, &ids[i % ids.len()], n);
        k.instances.extend(part.instances);
        k.init.extend(part.init);
    }
    k
}

fn port_loads(trace: &[(u64, u8)]) -> BTreeMap<(u64, u8), u32> {
    let mut per = BTreeMap::new();
    for &(c, p) in trace {
        *per.entry((c, p)).or_insert(0) += 1;
    }
    per
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ports_dispatch_at_most_one_uop_per_cycle(i in 0usize..64, n in 1usize..9, copies in 1usize..6) {
        let (catalog, machine) = reference();
        let ids = simulated_ids(&machine);
        let kernel = independent(&catalog, &ids[i % ids.len()], n);
        let (snap, trace) = run_traced(&machine, &kernel, copies).unwrap();
        prop_assert!(port_loads(&trace).values().all(|&c| c <= 1));
        prop_assert_eq!(trace.len() as u64, snap.dispatched_uops());
    }

    #[test]
    fn counters_are_conserved(i in 0usize..64, n in 1usize..9) {
        let (catalog, machine) = reference();
        let ids = simulated_ids(&machine);
        let id = &ids[i % ids.len()];
        let snap = execute(&machine, &independent(&catalog, id, n), false).unwrap();
        let entry = &machine.spec().ground_truth[id];
        let per_instr = entry.uops.len() as u64;
        let eliminated = entry.uops.iter().filter(|u| u.eliminated).count() as u64;
        prop_assert_eq!(snap.total_uops, per_instr * n as u64);
        prop_assert_eq!(snap.dispatched_uops() + snap.eliminated_uops(), snap.total_uops);
        // Idiom eliminations only ever add to the eliminated count.
        prop_assert!(snap.eliminated_uops() >= eliminated * n as u64);
    }

    #[test]
    fn execution_is_deterministic(parts in kernel_strategy(), copies in 1usize..4) {
        let (catalog, machine) = reference();
        let ids = simulated_ids(&machine);
        let kernel = build(&catalog, &ids, &parts);
        let a = run_traced(&machine, &kernel, copies).unwrap();
        let b = run_traced(&machine, &kernel, copies).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn concatenation_is_bounded(a in kernel_strategy(), b in kernel_strategy()) {
        let (catalog, machine) = reference();
        let ids = simulated_ids(&machine);
        let ka = build(&catalog, &ids, &a);
        let kb = build(&catalog, &ids, &b);
        let mut both = ka.clone();
        both.instances.extend(kb.instances.clone());
        both.init.extend(kb.init.clone());
        let ca = execute(&machine, &ka, false).unwrap().cycles;
        let cb = execute(&machine, &kb, false).unwrap().cycles;
        let cab = execute(&machine, &both, false).unwrap().cycles;
        let slack = machine.spec().issue_width as u64;
        prop_assert!(cab <= ca + cb + slack, "{} > {} + {} + {}", cab, ca, cb, slack);
        prop_assert!(cab >= ca.max(cb), "{} < max({}, {})", cab, ca, cb);
    }
}

#[test]
fn copies_scale_counters() {
    let (catalog, machine) = reference();
    let kernel = independent(&catalog, "PBLENDVB_XMM_XMM", 1);
    let one = run_copies(&machine, &kernel, 1).unwrap();
    let ten = run_copies(&machine, &kernel, 10).unwrap();
    assert_eq!(ten.total_uops, 10 * one.total_uops);
    assert_eq!(ten.uops_per_port.get(&0), Some(&10));
    assert_eq!(ten.uops_per_port.get(&5), Some(&10));
}
