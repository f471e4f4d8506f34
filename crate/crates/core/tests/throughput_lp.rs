mod common;

use proptest::prelude::*;
use uarch_probe::inference::{compute_throughput, NotComputable};
use uarch_probe::ports::{PortSet, PortUsage};
use uarch_probe::rational::Rational;

use common::oracle::*;

fn pu(s: &str) -> PortUsage {
    PortUsage::parse(s).unwrap()
}

fn tp(u: &PortUsage) -> Rational {
    compute_throughput(u, false).unwrap()
}

#[test]
fn worked_examples() {
    assert_eq!(tp(&pu("1*p01")), Rational::new(1, 2));
    assert_eq!(tp(&pu("3*p015+1*p23")), Rational::from_integer(1));
    assert_eq!(tp(&pu("2*p0+1*p01")), Rational::from_integer(2));
    assert_eq!(tp(&pu("1*p0156+1*p06")), Rational::new(1, 2));
    assert_eq!(tp(&pu("2*p05")), Rational::from_integer(1));
}

#[test]
fn divider_is_not_computable() {
    assert_eq!(compute_throughput(&pu("1*p0"), true), Err(NotComputable::Divider));
}

#[test]
fn single_uop_law() {
    for bits in 1u64..256 {
        let pc = PortSet::from_bits(bits);
        let u = PortUsage::from_entries([(pc, 1)]);
        assert_eq!(tp(&u), Rational::new(1, pc.len() as i64), "{u}");
    }
}

#[test]
fn matches_cut_oracle_exhaustively() {
    let usages = all_usages(4, 3, 3);
    assert_eq!(usages.len(), 15 * 3 + 105 * 9 + 455 * 27);
    for u in &usages {
        assert_eq!(tp(u), cut_bound(u), "{u}");
    }
}

#[test]
fn matches_grid_oracle_exhaustively() {
    for u in &all_usages(3, 3, 3) {
        assert_eq!(tp(u), grid_optimum(u), "{u}");
    }
}

#[test]
fn oracles_agree_on_four_ports() {
    for u in all_usages(4, 2, 2) {
        assert_eq!(grid_optimum(&u), cut_bound(&u), "{u}");
    }
}

fn usage_strategy() -> impl Strategy<Value = PortUsage> {
    prop::collection::vec((1u64..256, 1u32..5), 1..6)
        .prop_map(|v| PortUsage::from_entries(v.into_iter().map(|(b, c)| (PortSet::from_bits(b), c))))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lower_bounds_hold(u in usage_strategy()) {
        let t = tp(&u);
        let total = u.total_uops() as i64;
        prop_assert!(t >= Rational::new(total, u.ports().len() as i64));
        for (pc, c) in u.entries() {
            prop_assert!(t >= Rational::new(c as i64, pc.len() as i64));
        }
        prop_assert!(t <= Rational::from_integer(total));
    }

    #[test]
    fn equals_cut_bound(u in usage_strategy()) {
        prop_assert_eq!(tp(&u), cut_bound(&u));
    }

    #[test]
    fn adding_uops_never_helps(u in usage_strategy(), bits in 1u64..256, c in 1u32..3) {
        let mut more = u.clone();
        more.add(PortSet::from_bits(bits), c);
        prop_assert!(tp(&more) >= tp(&u));
    }
}
