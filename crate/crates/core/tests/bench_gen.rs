mod common;

use std::collections::BTreeSet;

use uarch_probe::bench_gen::{
    build_blocking_table, isolation_kernel, latency_kernels, throughput_kernels, ChainLibrary, GenError, LatencyPlan,
    LENGTHS,
};
use uarch_probe::exec::Execution;
use uarch_probe::isa::{BlockingClass, Catalog};
use uarch_probe::kernel::{Binding, Kernel};
use uarch_probe::machine::Machine;
use uarch_probe::measure::{run_delta, SimBackend};
use uarch_probe::ports::PortSet;

use common::*;

fn location(b: &Binding) -> Option<String> {
    match b {
        Binding::Reg { base, .. } => Some(format!("r:{base}")),
        Binding::Mem { slot, .. } => Some(format!("m:{slot}")),
        _ => None,
    }
}

/// Explicit read and write locations of the instances of `id`.
fn accesses(kernel: &Kernel, catalog: &Catalog, id: &str) -> Vec<(BTreeSet<String>, BTreeSet<String>)> {
    let desc = catalog.get(id).unwrap();
    kernel
        .instances
        .iter()
        .filter(|i| i.id == id)
        .map(|i| {
            let mut reads = BTreeSet::new();
            let mut writes = BTreeSet::new();
            for (op, b) in desc.operands.iter().zip(&i.bindings) {
                if op.implicit {
                    continue;
                }
                let Some(loc) = location(b) else { continue };
                if op.reads() && op.is_dependency() {
                    reads.insert(loc.clone());
                }
                if op.writes() {
                    writes.insert(loc);
                }
            }
            (reads, writes)
        })
        .collect()
}

#[test]
fn throughput_instances_are_independent() {
    let catalog = catalog();
    let lib = ChainLibrary::from_catalog(&catalog);
    for desc in catalog.instructions() {
        let Ok(kernels) = throughput_kernels(desc, &catalog, &lib) else { continue };
        for tk in kernels {
            if tk.kernel.register_pressure {
                continue;
            }
            let acc = accesses(&tk.kernel, &catalog, &desc.id);
            assert_eq!(acc.len(), tk.length, "{}", desc.id);
            for (i, (_, w)) in acc.iter().enumerate() {
                for (j, (r, _)) in acc.iter().enumerate() {
                    if i != j {
                        assert!(w.is_disjoint(r), "{} length {}: instance {j} reads what {i} writes", desc.id, tk.length);
                    }
                }
            }
        }
    }
}

#[test]
fn kernel_counts_follow_modes() {
    let catalog = catalog();
    let lib = ChainLibrary::from_catalog(&catalog);
    let count = |id: &str| throughput_kernels(catalog.get(id).unwrap(), &catalog, &lib).unwrap().len();
    assert_eq!(count("ADD_R64_R64"), LENGTHS.len());
    // ADC reads and writes the flags: with and without breakers.
    assert_eq!(count("ADC_R64_R64"), 2 * LENGTHS.len());
    // DIV: two value classes, and its implicit RDX:RAX operands need breakers.
    assert_eq!(count("DIV_R64"), 4 * LENGTHS.len());
}

#[test]
fn simd_pairs_get_both_shuffles_and_same_register() {
    let catalog = catalog();
    let lib = ChainLibrary::from_catalog(&catalog);
    let LatencyPlan::Kernels(ks) = latency_kernels(catalog.get("PCMPGTD_XMM_XMM").unwrap(), 1, 0, &catalog, &lib).unwrap()
    else {
        panic!("unchainable")
    };
    let variants: Vec<&str> = ks.iter().map(|k| k.variant.as_str()).collect();
    assert!(variants.iter().any(|v| v.starts_with("int-shuffle")), "{variants:?}");
    assert!(variants.iter().any(|v| v.starts_with("fp-shuffle")), "{variants:?}");
    assert_eq!(ks.iter().filter(|k| k.same_register).count(), 1);
    for k in &ks {
        k.kernel.validate(&catalog).unwrap();
    }
}

#[test]
fn blockers_stay_on_their_combination() {
    let (catalog, machine) = reference();
    let backend = SimBackend::new(machine);
    let lib = ChainLibrary::from_catalog(&catalog);
    let config = quick_config();
    let table = build_blocking_table(&catalog, &lib, &backend, &config, BlockingClass::SseSafe, Execution::default()).unwrap();
    for (ports, entry) in &table.entries {
        let k = isolation_kernel(catalog.get(&entry.instr).unwrap(), 4, &catalog, &lib).unwrap();
        let m = run_delta(&k, &backend, &config).unwrap();
        if entry.uops == uarch_probe::rational::int(1) {
            assert_eq!(m.used_ports(), *ports, "{}", entry.instr);
        } else {
            assert!(ports.is_subset(m.used_ports()), "{}", entry.instr);
        }
    }
}

#[test]
fn missing_loader_is_uncoverable() {
    let catalog = catalog();
    let mut spec = reference_spec();
    let loads: PortSet = [2u8, 3].into_iter().collect();
    // Stores also use the load ports for their address, so they go too.
    spec.ground_truth
        .retain(|_, e| e.uops.iter().all(|u| u.port_set() != loads));
    let backend = SimBackend::new(Machine::new(spec, &catalog).unwrap());
    let lib = ChainLibrary::from_catalog(&catalog);
    let err = build_blocking_table(&catalog, &lib, &backend, &quick_config(), BlockingClass::SseSafe, Execution::default())
        .unwrap_err();
    match err {
        GenError::Uncoverable(combos) => assert!(combos.iter().any(|c| c.starts_with("p23")), "{combos:?}"),
        e => panic!("unexpected {e}"),
    }
}
