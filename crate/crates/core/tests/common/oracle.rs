//! Independent oracles for the minimal maximum port load.

use std::collections::HashSet;

use uarch_probe::ports::{PortSet, PortUsage};
use uarch_probe::rational::Rational;

/// Every usage over ports `0..ports` with at most `entries` distinct port
/// combinations and counts in `1..=max_count`.
pub fn all_usages(ports: u8, entries: usize, max_count: u32) -> Vec<PortUsage> {
    let combos: Vec<PortSet> = (1u64..(1 << ports)).map(PortSet::from_bits).collect();
    let mut out = Vec::new();
    let mut chosen = Vec::new();
    fn rec(
        combos: &[PortSet],
        start: usize,
        left: usize,
        max_count: u32,
        chosen: &mut Vec<(PortSet, u32)>,
        out: &mut Vec<PortUsage>,
    ) {
        if !chosen.is_empty() {
            out.push(PortUsage::from_entries(chosen.iter().copied()));
        }
        if left == 0 {
            return;
        }
        for i in start..combos.len() {
            for c in 1..=max_count {
                chosen.push((combos[i], c));
                rec(combos, i + 1, left - 1, max_count, chosen, out);
                chosen.pop();
            }
        }
    }
    rec(&combos, 0, entries, max_count, &mut chosen, &mut out);
    out
}

/// Max over port subsets Q of the uops confined to Q, divided by |Q|.
pub fn cut_bound(usage: &PortUsage) -> Rational {
    let ports = usage.ports();
    let list = ports.to_vec();
    let mut best = Rational::from_integer(0);
    for mask in 1u64..(1 << list.len()) {
        let q: PortSet = list
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, p)| *p)
            .collect();
        let inside: u32 = usage.entries().filter(|(pc, _)| pc.is_subset(q)).map(|(_, c)| c).sum();
        best = best.max(Rational::new(inside as i64, q.len() as i64));
    }
    best
}

fn lcm_upto(n: usize) -> u32 {
    fn gcd(a: u32, b: u32) -> u32 {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    (1..=n as u32).fold(1, |acc, k| acc / gcd(acc, k) * k)
}

fn compositions(units: u32, parts: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if parts == 1 {
        prefix.push(units);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for u in 0..=units {
        prefix.push(u);
        compositions(units - u, parts - 1, prefix, out);
        prefix.pop();
    }
}

/// Tries every assignment of uop fractions in steps of 1/lcm(1..|P|), which
/// contains an optimum since the optimal load has denominator at most |P|.
pub fn grid_optimum(usage: &PortUsage) -> Rational {
    let ports = usage.ports().to_vec();
    if ports.is_empty() {
        return Rational::from_integer(0);
    }
    let d = lcm_upto(ports.len());
    let mut states: HashSet<Vec<u32>> = HashSet::from([vec![0; ports.len()]]);
    for (pc, count) in usage.entries() {
        let idx: Vec<usize> = pc.iter().map(|p| ports.iter().position(|q| *q == p).unwrap()).collect();
        let mut splits = Vec::new();
        compositions(count * d, idx.len(), &mut Vec::new(), &mut splits);
        let mut next = HashSet::new();
        for s in &states {
            for split in &splits {
                let mut n = s.clone();
                for (k, &i) in idx.iter().enumerate() {
                    n[i] += split[k];
                }
                next.insert(n);
            }
        }
        states = next;
    }
    let best = states.iter().map(|s| *s.iter().max().unwrap()).min().unwrap();
    Rational::new(best as i64, d as i64)
}
