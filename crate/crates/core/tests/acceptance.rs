//! One check per acceptance criterion. Each prints a PASS or FAIL line to
//! the real stdout, so the lines show up even when output is captured.

mod common;

use std::collections::BTreeSet;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use uarch_probe::bench_gen::LatencyKind;
use uarch_probe::exec::Execution;
use uarch_probe::inference::{compute_throughput, infer_port_usage, Context, NotComputable, PairLatency};
use uarch_probe::isa::BlockingClass;
use uarch_probe::kernel::ValueClass;
use uarch_probe::machine::random::{random_id, randomize, RandomConfig};
use uarch_probe::machine::Machine;
use uarch_probe::measure::{run_delta, MeasurementConfig, SimBackend};
use uarch_probe::pipeline::{validate, Session};
use uarch_probe::ports::{PortSet, PortUsage};
use uarch_probe::rational::{int, Rational};
use uarch_probe::report::{from_json, from_xml, to_json, to_xml, CharacterizationResult};

use common::oracle::{all_usages, cut_bound, grid_optimum};
use common::*;

/// Seed of the random instruction batch for criterion 1.
const RANDOM_SEED: u64 = 20_240_601;
const RANDOM_COUNT: usize = 200;
const ORACLE_BUDGET: Duration = Duration::from_secs(120);
const VALIDATE_BUDGET: Duration = Duration::from_secs(300);
const OVERHEADS: [u64; 3] = [0, 37, 1000];

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn pu(s: &str) -> PortUsage {
    PortUsage::parse(s).unwrap()
}

fn run_all(catalog: &uarch_probe::isa::Catalog, machine: &Machine, config: MeasurementConfig, ids: &[String]) -> Vec<CharacterizationResult> {
    let backend = SimBackend::new(machine.clone());
    let session = Session::new(catalog, &backend, config, Execution::default()).unwrap();
    let out = session.run(ids);
    assert!(out.errors.is_empty(), "{:?}", out.errors);
    out.results
}

fn c1_random_oracle() -> Check {
    let started = Instant::now();
    let (catalog, spec) = randomize(&catalog(), &reference_spec(), RandomConfig::new(RANDOM_COUNT, RANDOM_SEED)).unwrap();
    let machine = Machine::new(spec, &catalog).unwrap();
    let ids: Vec<String> = (0..RANDOM_COUNT).map(random_id).collect();
    let results = run_all(&catalog, &machine, MeasurementConfig::default(), &ids);
    let elapsed = started.elapsed();
    let agree = results
        .iter()
        .filter(|r| machine.ground_truth_port_usage(&r.id).unwrap() == r.port_usage)
        .count();
    ensure(results.len() == RANDOM_COUNT, || format!("{} results", results.len()))?;
    ensure(agree == RANDOM_COUNT, || format!("{agree}/{RANDOM_COUNT} port usages agree"))?;
    ensure(elapsed < ORACLE_BUDGET, || format!("took {elapsed:.1?}"))?;
    Ok(format!("{agree}/{RANDOM_COUNT} port usages agree in {elapsed:.1?} (budget {ORACLE_BUDGET:?})"))
}

fn c2_disambiguation() -> Check {
    let (catalog, machine) = reference();
    let r = characterize(&catalog, &machine, "PBLENDVB_XMM_XMM");
    ensure(r.port_usage == pu("2*p05"), || format!("PBLENDVB: {}", r.port_usage))?;
    let (catalog, machine) = scenario();
    let adc = characterize(&catalog, &machine, "ADC_R64_R64");
    let cmov = characterize(&catalog, &machine, "CMOVBE_R64_R64");
    ensure(adc.port_usage == pu("1*p0156+1*p06"), || format!("ADC: {}", adc.port_usage))?;
    ensure(cmov.port_usage == pu("2*p0156"), || format!("CMOVBE: {}", cmov.port_usage))?;
    Ok(format!("2*p05, {} and {}", adc.port_usage, cmov.port_usage))
}

fn exact(r: &CharacterizationResult, s: usize, d: usize) -> Option<Rational> {
    r.latency
        .headline(s, d)
        .filter(|v| v.kind == LatencyKind::Exact)
        .map(|v| v.cycles)
}

fn c3_aes() -> Check {
    let (catalog, machine) = reference();
    let r = characterize(&catalog, &machine, "AESDEC_XMM_XMM");
    let (own, key) = (exact(&r, 0, 0), exact(&r, 1, 0));
    ensure(own == Some(int(8)) && key == Some(int(1)), || format!("lat(op1,op1)={own:?}, lat(op2,op1)={key:?}"))?;
    Ok("lat(op1,op1)=8, lat(op2,op1)=1".into())
}

fn c4_shld() -> Check {
    let (catalog, machine) = reference();
    let r = characterize(&catalog, &machine, "SHLD_R64_R64_I8");
    let (own, other) = (exact(&r, 0, 0), exact(&r, 1, 0));
    let same = r.latency.same_register(1, 0).map(|v| v.cycles);
    ensure(own == Some(int(3)) && other == Some(int(4)) && same == Some(int(1)), || {
        format!("lat(op1,op1)={own:?}, lat(op2,op1)={other:?}, same-register={same:?}")
    })?;
    Ok("lat(op1,op1)=3, lat(op2,op1)=4, same-register 1".into())
}

fn c5_movq2dq() -> Check {
    let (catalog, machine) = reference();
    let backend = SimBackend::new(machine.clone());
    let session = Session::new(&catalog, &backend, quick_config(), Execution::default()).unwrap();
    let table = session.table(BlockingClass::SseSafe).unwrap();
    let ctx = Context {
        catalog: &catalog,
        lib: session.library(),
        backend: &backend,
        config: quick_config(),
    };
    let desc = catalog.get("MOVQ2DQ_XMM_MM").unwrap();
    let inf = infer_port_usage(&ctx, desc, table, Some(int(2))).unwrap();
    let p015: PortSet = [0u8, 1, 5].into_iter().collect();
    let p15: PortSet = [1u8, 5].into_iter().collect();
    ensure(table.get(p15).is_some(), || "no {1,5} blocker".into())?;
    ensure(inf.usage.get(p015) == 1 && inf.usage.get(p15) == 0, || format!("inferred {}", inf.usage))?;
    Ok(format!("inferred {} with the {{1,5}} blocker {}", inf.usage, table.get(p15).unwrap().instr))
}

fn c6_lp() -> Check {
    let tp = |u: &PortUsage| compute_throughput(u, false).unwrap();
    let four = all_usages(4, 3, 3);
    for u in &four {
        ensure(tp(u) == cut_bound(u), || format!("{u}: LP {} vs cut {}", tp(u), cut_bound(u)))?;
    }
    let three = all_usages(3, 3, 3);
    for u in &three {
        ensure(tp(u) == grid_optimum(u), || format!("{u}: LP {} vs enumeration {}", tp(u), grid_optimum(u)))?;
    }
    for bits in 1u64..256 {
        let pc = PortSet::from_bits(bits);
        let u = PortUsage::from_entries([(pc, 1)]);
        ensure(tp(&u) == Rational::new(1, pc.len() as i64), || format!("{u}: {}", tp(&u)))?;
    }
    Ok(format!(
        "{} usages over 4 ports and {} over 3 ports match exactly; 1/|P| holds for 255 port sets",
        four.len(),
        three.len()
    ))
}

fn c7_overhead() -> Check {
    let (catalog, machine) = reference();
    let config = MeasurementConfig::default();
    let mut n = 0;
    for id in ["ADD_R64_R64", "PBLENDVB_XMM_XMM", "DIV_R64", "MOV_M64_R64"] {
        let kernel = independent(&catalog, id, 4);
        let base = run_delta(&kernel, &SimBackend::new(machine.clone()), &config).unwrap();
        for c in OVERHEADS {
            let uops = [(0u8, c), (5u8, c / 2)].into_iter().collect();
            let m = run_delta(&kernel, &SimBackend::new(machine.clone()).with_overhead(c, uops), &config).unwrap();
            ensure(m == base, || format!("{id}: overhead {c} changed the result"))?;
            n += 1;
        }
    }
    Ok(format!("{n} runs with overhead in {OVERHEADS:?} are bit-identical"))
}

fn c8_divider() -> Check {
    let (catalog, machine) = reference();
    let r = characterize(&catalog, &machine, "DIV_R64");
    let fast = r.latency.value_class(2, 1, ValueClass::Fast).map(|v| v.cycles);
    let slow = r.latency.value_class(2, 1, ValueClass::Slow).map(|v| v.cycles);
    ensure(matches!((fast, slow), (Some(f), Some(s)) if s > f), || format!("fast {fast:?}, slow {slow:?}"))?;
    ensure(r.throughput.computed.is_none(), || "throughput was computed".into())?;
    ensure(compute_throughput(&r.port_usage, true) == Err(NotComputable::Divider), || "LP accepted a divider".into())?;
    let naive = compute_throughput(&r.port_usage, false).unwrap();
    let measured = r.throughput.measured.cycles;
    ensure(measured > naive, || format!("measured {measured} <= {naive}"))?;
    Ok(format!(
        "latency slow {} > fast {}; measured throughput {measured} > {naive} from ports; LP not computable",
        slow.unwrap(),
        fast.unwrap()
    ))
}

fn grammatical(s: &str) -> bool {
    s.is_empty()
        || s.split('+').all(|t| {
            let Some((n, p)) = t.split_once("*p") else { return false };
            let ranks: Vec<u32> = p.chars().filter_map(|c| c.to_digit(36)).collect();
            !n.is_empty()
                && !n.starts_with('0')
                && n.bytes().all(|b| b.is_ascii_digit())
                && !p.is_empty()
                && ranks.len() == p.len()
                && p.chars().all(|c| c.is_ascii_digit() || c.is_ascii_uppercase())
                && ranks.windows(2).all(|w| w[0] < w[1])
        })
}

fn c9_round_trip() -> Check {
    let (catalog, machine) = reference();
    let ids: Vec<String> = catalog
        .instructions()
        .iter()
        .filter(|d| machine.supports(&d.id))
        .map(|d| d.id.clone())
        .collect();
    let mut results = run_all(&catalog, &machine, quick_config(), &ids);
    results.sort_by(|a, b| a.id.cmp(&b.id));
    let json = to_json(&results).unwrap();
    let xml = to_xml(&results).unwrap();
    ensure(from_json(&json).unwrap() == results, || "JSON round trip differs".into())?;
    ensure(from_xml(&xml).unwrap() == results, || "XML round trip differs".into())?;
    let doc: serde_json::Value = serde_json::from_str(&json).unwrap();
    for r in doc["results"].as_array().unwrap() {
        let s = r["port-usage"].as_str().unwrap();
        ensure(grammatical(s), || format!("bad notation {s}"))?;
    }
    Ok(format!("{} results round-trip through JSON and XML", results.len()))
}

fn c10_end_to_end() -> Check {
    let (catalog, machine) = reference();
    let started = Instant::now();
    let code = uarch_probe::cli::run(["uarch-probe", "validate"]);
    let elapsed = started.elapsed();
    ensure(code == 0, || format!("exit code {code}"))?;
    ensure(elapsed < VALIDATE_BUDGET, || format!("took {elapsed:.1?}"))?;

    let ids: Vec<String> = machine.spec().ground_truth.keys().cloned().collect();
    ensure(ids.len() >= 30, || format!("{} instructions", ids.len()))?;
    let results = run_all(&catalog, &machine, quick_config(), &ids);
    ensure(validate(&results, &machine).is_empty(), || "mismatches".into())?;
    let mut seen = BTreeSet::new();
    for r in &results {
        for pair in r.latency.pairs.values() {
            if let PairLatency::Values(vs) = pair {
                for v in vs {
                    seen.insert(v.kind.as_str().to_string());
                    if v.same_register {
                        seen.insert("same-register".into());
                    }
                    if let Some(c) = v.value_class {
                        seen.insert(c.as_str().into());
                    }
                }
            } else {
                seen.insert("unchainable".into());
            }
        }
        if r.zero_idiom {
            seen.insert("zero-idiom".into());
        }
    }
    for case in ["exact", "upper-bound", "round-trip", "same-register", "fast", "slow", "unchainable", "zero-idiom"] {
        ensure(seen.contains(case), || format!("no `{case}` latency case"))?;
    }
    Ok(format!("exit 0 over {} instructions in {elapsed:.1?} (budget {VALIDATE_BUDGET:?})", ids.len()))
}

#[test]
fn acceptance() {
    let checks: [(&str, fn() -> Check); 10] = [
        ("oracle equivalence on random instructions", c1_random_oracle),
        ("2*p05 and 1*p0156+1*p06 disambiguation", c2_disambiguation),
        ("AES operand latencies", c3_aes),
        ("SHLD latencies and same-register variant", c4_shld),
        ("MOVQ2DQ second uop on {0,1,5}", c5_movq2dq),
        ("throughput LP against exhaustive oracles", c6_lp),
        ("constant overhead cancels", c7_overhead),
        ("divider handling", c8_divider),
        ("report round trip", c9_round_trip),
        ("end-to-end validate", c10_end_to_end),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in checks.iter().enumerate() {
        let outcome = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(e) => Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let line = match &outcome {
            Ok(detail) => format!("PASS {:>2} {name}: {detail}\n", i + 1),
            Err(why) => format!("FAIL {:>2} {name}: {why}\n", i + 1),
        };
        std::io::stdout().write_all(line.as_bytes()).unwrap();
        if outcome.is_err() {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
