mod common;

use uarch_probe::bench_gen::LatencyKind;
use uarch_probe::inference::{block_rep, compute_throughput, infer_port_usage, Context, InferenceError};
use uarch_probe::isa::BlockingClass;
use uarch_probe::kernel::ValueClass;
use uarch_probe::measure::SimBackend;
use uarch_probe::pipeline::validate;
use uarch_probe::ports::{PortSet, PortUsage};
use uarch_probe::rational::{int, Rational};

use common::*;

fn pu(s: &str) -> PortUsage {
    PortUsage::parse(s).unwrap()
}

fn ports(s: &str) -> PortSet {
    pu(&format!("1*{s}")).entries().next().unwrap().0
}

#[test]
fn two_uops_on_the_same_pair_stay_together() {
    let (catalog, machine) = reference();
    let r = characterize(&catalog, &machine, "PBLENDVB_XMM_XMM");
    assert_eq!(r.port_usage, pu("2*p05"));
    assert_ne!(r.port_usage, pu("1*p0+1*p5"));
}

#[test]
fn overlapping_combinations_are_distinguished() {
    let (catalog, machine) = scenario();
    with_session(&catalog, &machine, |s| {
        let adc = s.characterize(catalog.get("ADC_R64_R64").unwrap()).unwrap();
        let cmov = s.characterize(catalog.get("CMOVBE_R64_R64").unwrap()).unwrap();
        assert_eq!(adc.port_usage, pu("1*p0156+1*p06"));
        assert_eq!(cmov.port_usage, pu("2*p0156"));
    });
}

#[test]
fn aes_operand_latencies_differ() {
    let (catalog, machine) = reference();
    let r = characterize(&catalog, &machine, "AESDEC_XMM_XMM");
    let own = r.latency.headline(0, 0).unwrap();
    let key = r.latency.headline(1, 0).unwrap();
    assert_eq!((own.kind, own.cycles), (LatencyKind::Exact, int(8)));
    assert_eq!((key.kind, key.cycles), (LatencyKind::Exact, int(1)));
}

#[test]
fn shld_same_register_fast_path() {
    let (catalog, machine) = reference();
    let r = characterize(&catalog, &machine, "SHLD_R64_R64_I8");
    assert_eq!(r.latency.headline(0, 0).unwrap().cycles, int(3));
    assert_eq!(r.latency.headline(1, 0).unwrap().cycles, int(4));
    let same = r.latency.same_register(1, 0).unwrap();
    assert_eq!(same.cycles, int(1));
    assert!(!r.zero_idiom);
}

#[test]
fn movq2dq_second_uop_can_use_port_0() {
    let (catalog, machine) = reference();
    let backend = SimBackend::new(machine.clone());
    with_session(&catalog, &machine, |s| {
        let table = s.table(BlockingClass::SseSafe).unwrap().clone();
        let ctx = Context {
            catalog: &catalog,
            lib: s.library(),
            backend: &backend,
            config: quick_config(),
        };
        let desc = catalog.get("MOVQ2DQ_XMM_MM").unwrap();
        let inf = infer_port_usage(&ctx, desc, &table, Some(int(2))).unwrap();
        assert_eq!(inf.usage, pu("1*p0+1*p015"));
        // Behind the {1,5} blocker only the blockers themselves show up.
        let p15 = ports("p15");
        let entry = table.get(p15).unwrap();
        let (_, raw) = inf.probes.iter().find(|(pc, _)| *pc == p15).unwrap();
        assert_eq!(*raw, int(inf.block_rep as i64) * entry.uops_on_ports);
    });
}

#[test]
fn single_port_pair_usage() {
    let (catalog, machine) = reference();
    let r = characterize(&catalog, &machine, "MOV_R64_M64");
    assert_eq!(r.port_usage, pu("1*p23"));
    let load = r.latency.headline(1, 0).unwrap();
    assert_eq!((load.kind, load.cycles), (LatencyKind::Exact, int(4)));
}

#[test]
fn divider_classes() {
    let (catalog, machine) = reference();
    for id in ["DIV_R64", "DIVPS_XMM_XMM"] {
        let r = characterize(&catalog, &machine, id);
        let (s, d) = if id == "DIV_R64" { (2, 1) } else { (0, 0) };
        let fast = r.latency.value_class(s, d, ValueClass::Fast).unwrap().cycles;
        let slow = r.latency.value_class(s, d, ValueClass::Slow).unwrap().cycles;
        assert!(slow > fast, "{id}: {slow} <= {fast}");
        assert_eq!(r.throughput.computed, None, "{id}");
        let tf = &r.throughput.value_classes[&ValueClass::Fast].cycles;
        let ts = &r.throughput.value_classes[&ValueClass::Slow].cycles;
        assert!(ts > tf, "{id}");
        // The port usage alone would promise far more.
        let naive = compute_throughput(&r.port_usage, false).unwrap();
        assert!(r.throughput.measured.cycles > naive, "{id}");
    }
}

#[test]
fn zero_idioms() {
    let (catalog, machine) = reference();
    with_session(&catalog, &machine, |s| {
        for (id, expect) in [
            ("XOR_R64_R64", true),
            ("SUB_R64_R64", true),
            ("PCMPGTD_XMM_XMM", true),
            ("ADD_R64_R64", false),
            ("AND_R64_R64", false),
            ("SHLD_R64_R64_I8", false),
        ] {
            let r = s.characterize(catalog.get(id).unwrap()).unwrap();
            assert_eq!(r.zero_idiom, expect, "{id}");
        }
    });
}

#[test]
fn fractional_latency_is_reported_raw() {
    let r = Rational::new(5, 4);
    let v = uarch_probe::inference::LatencyValue {
        kind: LatencyKind::Exact,
        cycles: r,
        chain: "MOVSX".into(),
        same_register: false,
        value_class: None,
    };
    assert!(v.is_fractional());
}

#[test]
fn block_rep_follows_max_latency() {
    assert_eq!(block_rep(Some(int(3))), 24);
    assert_eq!(block_rep(Some(Rational::new(5, 4))), 16);
    assert_eq!(block_rep(None), 256);
}

#[test]
fn wrong_blocker_is_caught() {
    let (catalog, machine) = reference();
    // A port-5-only blocker for {1,5} hides that the uop avoids port 5.
    let results = with_session(&catalog, &machine, |s| {
        assert!(s.override_blocker(ports("p15"), "PSHUFB_XMM_XMM"));
        s.run(&["MOVQ2DQ_XMM_MM".to_string()])
    });
    let mismatches = validate(&results.results, &machine);
    assert_eq!(mismatches.len(), 1);
    assert_eq!(mismatches[0].expected, "1*p0+1*p015");
    assert_eq!(mismatches[0].actual, "1*p0+1*p15");
}

#[test]
fn over_attribution_is_an_inconsistency() {
    let (catalog, machine) = reference();
    with_session(&catalog, &machine, |s| {
        assert!(s.override_blocker(ports("p0"), "ADD_R64_R64"));
        let err = s.characterize(catalog.get("PBLENDVB_XMM_XMM").unwrap()).unwrap_err();
        assert!(matches!(err, InferenceError::Inconsistent { .. }), "{err}");
    });
}

#[test]
fn measured_throughput_respects_port_bound() {
    let (catalog, machine) = reference();
    let tolerance = Rational::new(1, 100);
    let outcome = with_session(&catalog, &machine, |s| {
        let ids: Vec<String> = catalog.instructions().iter().map(|d| d.id.clone()).collect();
        s.run(&ids)
    });
    assert!(outcome.errors.is_empty(), "{:?}", outcome.errors);
    for r in &outcome.results {
        if let Some(c) = r.throughput.computed {
            assert!(r.throughput.measured.cycles >= c - tolerance, "{}: {} < {c}", r.id, r.throughput.measured.cycles);
        }
    }
}

#[test]
fn total_uops_match_port_usage() {
    let (catalog, machine) = scenario();
    let outcome = with_session(&catalog, &machine, |s| {
        let ids: Vec<String> = machine.spec().ground_truth.keys().cloned().collect();
        s.run(&ids)
    });
    assert!(outcome.errors.is_empty(), "{:?}", outcome.errors);
    for r in &outcome.results {
        assert_eq!(r.port_usage.total_uops(), r.total_uops, "{}", r.id);
    }
    assert_eq!(validate(&outcome.results, &machine), vec![]);
}
