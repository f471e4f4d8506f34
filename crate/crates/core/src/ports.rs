//! Port sets, port usages and the p-notation (`3*p015+1*p23`).

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Highest port id expressible in p-notation (digits, then A-Z).
pub const MAX_PORT: u8 = 35;

/// A set of execution ports, stored as a bit mask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PortSet(u64);

impl PortSet {
    pub const EMPTY: PortSet = PortSet(0);

    pub fn from_bits(bits: u64) -> Self {
        PortSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn single(port: u8) -> Self {
        PortSet(1 << port)
    }

    pub fn contains(self, port: u8) -> bool {
        port < 64 && self.0 & (1 << port) != 0
    }

    pub fn insert(&mut self, port: u8) {
        self.0 |= 1 << port;
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: PortSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_strict_subset(self, other: PortSet) -> bool {
        self.is_subset(other) && self != other
    }

    pub fn union(self, other: PortSet) -> PortSet {
        PortSet(self.0 | other.0)
    }

    pub fn intersection(self, other: PortSet) -> PortSet {
        PortSet(self.0 & other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = u8> {
        (0..64u8).filter(move |&p| self.contains(p))
    }

    pub fn to_vec(self) -> Vec<u8> {
        self.iter().collect()
    }
}

impl FromIterator<u8> for PortSet {
    fn from_iter<I: IntoIterator<Item = u8>>(iter: I) -> Self {
        let mut s = PortSet::EMPTY;
        for p in iter {
            s.insert(p);
        }
        s
    }
}

/// Lexicographic order on the ascending port lists.
impl Ord for PortSet {
    fn cmp(&self, other: &Self) -> Ordering {
        self.iter().cmp(other.iter())
    }
}

impl PartialOrd for PortSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn port_char(port: u8) -> char {
    match port {
        0..=9 => (b'0' + port) as char,
        10..=35 => (b'A' + port - 10) as char,
        _ => '?',
    }
}

fn char_port(c: char) -> Option<u8> {
    match c {
        '0'..='9' => Some(c as u8 - b'0'),
        'A'..='Z' => Some(c as u8 - b'A' + 10),
        _ => None,
    }
}

impl fmt::Display for PortSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("p")?;
        for p in self.iter() {
            write!(f, "{}", port_char(p))?;
        }
        Ok(())
    }
}

impl fmt::Debug for PortSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Number of uops per port combination (`pu` in the port-usage definition).
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct PortUsage(BTreeMap<PortSet, u32>);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid p-notation `{input}`: {reason}")]
pub struct NotationError {
    pub input: String,
    pub reason: String,
}

impl PortUsage {
    pub fn new() -> Self {
        PortUsage::default()
    }

    /// Adds `count` uops on `ports`. Zero counts and empty sets are ignored.
    pub fn add(&mut self, ports: PortSet, count: u32) {
        if count > 0 && !ports.is_empty() {
            *self.0.entry(ports).or_insert(0) += count;
        }
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (PortSet, u32)>) -> Self {
        let mut pu = PortUsage::new();
        for (ports, count) in entries {
            pu.add(ports, count);
        }
        pu
    }

    pub fn entries(&self) -> impl Iterator<Item = (PortSet, u32)> + '_ {
        self.0.iter().map(|(p, c)| (*p, *c))
    }

    pub fn get(&self, ports: PortSet) -> u32 {
        self.0.get(&ports).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn total_uops(&self) -> u32 {
        self.0.values().sum()
    }

    pub fn ports(&self) -> PortSet {
        self.0.keys().fold(PortSet::EMPTY, |a, p| a.union(*p))
    }

    pub fn parse(input: &str) -> Result<Self, NotationError> {
        let err = |reason: &str| NotationError {
            input: input.to_string(),
            reason: reason.to_string(),
        };
        let mut pu = PortUsage::new();
        if input.is_empty() {
            return Ok(pu);
        }
        let mut prev: Option<PortSet> = None;
        for term in input.split('+') {
            let (count, ports) = term.split_once("*p").ok_or_else(|| err("term without `*p`"))?;
            if count.is_empty() || !count.bytes().all(|b| b.is_ascii_digit()) || count.starts_with('0') {
                return Err(err("count must be a positive integer"));
            }
            let count: u32 = count.parse().map_err(|_| err("count out of range"))?;
            let mut set = PortSet::EMPTY;
            let mut last: Option<u8> = None;
            for c in ports.chars() {
                let p = char_port(c).ok_or_else(|| err("bad port character"))?;
                if last.is_some_and(|l| p <= l) {
                    return Err(err("ports must be strictly increasing"));
                }
                set.insert(p);
                last = Some(p);
            }
            if set.is_empty() {
                return Err(err("empty port list"));
            }
            if prev.is_some_and(|p| p >= set) {
                return Err(err("terms must be distinct and sorted"));
            }
            prev = Some(set);
            pu.add(set, count);
        }
        Ok(pu)
    }
}

impl fmt::Display for PortUsage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (ports, count)) in self.entries().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            write!(f, "{count}*{ports}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for PortUsage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PortUsage({self})")
    }
}

impl std::str::FromStr for PortUsage {
    type Err = NotationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PortUsage::parse(s)
    }
}
