//! Exact two-phase simplex over big rationals (Bland's rule), and the
//! throughput LP built on it.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::ports::{PortSet, PortUsage};
use crate::rational::Rational;

type Q = BigRational;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LpOutcome {
    Optimal(Q, Vec<Q>),
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: Vec<Vec<Q>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> &Q {
        &self.rows[i][self.width]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c].clone();
        for v in self.rows[r].iter_mut() {
            *v = &*v / &p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let f = row[c].clone();
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                if !pv.is_zero() {
                    *v -= &f * pv;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost` over the allowed columns. Returns false if unbounded.
    fn optimize(&mut self, cost: &[Q], allowed: impl Fn(usize) -> bool) -> bool {
        loop {
            let mut entering = None;
            for j in (0..self.width).filter(|&j| allowed(j)) {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut r = cost[j].clone();
                for (i, row) in self.rows.iter().enumerate() {
                    if !row[j].is_zero() {
                        r -= &cost[self.basis[i]] * &row[j];
                    }
                }
                if r.is_negative() {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else { return true };
            let mut leave: Option<(usize, Q)> = None;
            for i in 0..self.rows.len() {
                let a = &self.rows[i][c];
                if !a.is_positive() {
                    continue;
                }
                let ratio = self.rhs(i) / a;
                let better = match &leave {
                    None => true,
                    Some((l, best)) => ratio < *best || (ratio == *best && self.basis[i] < self.basis[*l]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, c),
                None => return false,
            }
        }
    }

    fn objective(&self, cost: &[Q]) -> Q {
        self.basis
            .iter()
            .enumerate()
            .map(|(i, &b)| &cost[b] * self.rhs(i))
            .fold(Q::zero(), |a, b| a + b)
    }
}

/// Minimizes `c·x` subject to `A x = b`, `x ≥ 0`.
pub fn minimize(a: &[Vec<Q>], b: &[Q], c: &[Q]) -> LpOutcome {
    let m = a.len();
    let n = c.len();
    let width = n + m;
    let mut rows = Vec::with_capacity(m);
    for (i, (row, rhs)) in a.iter().zip(b).enumerate() {
        let neg = rhs.is_negative();
        let mut r: Vec<Q> = row.iter().map(|v| if neg { -v } else { v.clone() }).collect();
        r.resize(n, Q::zero());
        r.extend((0..m).map(|k| if k == i { Q::one() } else { Q::zero() }));
        r.push(if neg { -rhs } else { rhs.clone() });
        rows.push(r);
    }
    let mut t = Tableau {
        rows,
        basis: (n..width).collect(),
        width,
    };
    let phase1: Vec<Q> = (0..width).map(|j| if j < n { Q::zero() } else { Q::one() }).collect();
    t.optimize(&phase1, |_| true);
    if t.objective(&phase1).is_positive() {
        return LpOutcome::Infeasible;
    }
    let mut i = 0;
    while i < t.rows.len() {
        if t.basis[i] >= n {
            match (0..n).find(|&j| !t.rows[i][j].is_zero()) {
                Some(j) => t.pivot(i, j),
                None => {
                    t.rows.remove(i);
                    t.basis.remove(i);
                    continue;
                }
            }
        }
        i += 1;
    }
    let mut cost: Vec<Q> = c.to_vec();
    cost.resize(width, Q::zero());
    if !t.optimize(&cost, |j| j < n) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![Q::zero(); n];
    for (i, &bcol) in t.basis.iter().enumerate() {
        if bcol < n {
            x[bcol] = t.rhs(i).clone();
        }
    }
    LpOutcome::Optimal(t.objective(&cost), x)
}

fn q(v: i64) -> Q {
    Q::from_integer(BigInt::from(v))
}

/// Minimal z such that the uops of `usage` can be spread over their ports
/// with no port receiving more than z uops per instruction.
pub fn min_max_load(usage: &PortUsage) -> Rational {
    let entries: Vec<(PortSet, u32)> = usage.entries().collect();
    if entries.is_empty() {
        return Rational::from_integer(0);
    }
    let ports: Vec<u8> = usage.ports().to_vec();
    // Columns: f(p, entry) for p in entry, then z, then one slack per port.
    let mut vars: Vec<(usize, u8)> = Vec::new();
    for (e, (pc, _)) in entries.iter().enumerate() {
        for p in pc.iter() {
            vars.push((e, p));
        }
    }
    let z = vars.len();
    let n = z + 1 + ports.len();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (e, (_, count)) in entries.iter().enumerate() {
        let mut row = vec![Q::zero(); n];
        for (j, (ve, _)) in vars.iter().enumerate() {
            if *ve == e {
                row[j] = Q::one();
            }
        }
        a.push(row);
        b.push(q(*count as i64));
    }
    for (k, port) in ports.iter().enumerate() {
        let mut row = vec![Q::zero(); n];
        for (j, (_, vp)) in vars.iter().enumerate() {
            if vp == port {
                row[j] = Q::one();
            }
        }
        row[z] = -Q::one();
        row[z + 1 + k] = Q::one();
        a.push(row);
        b.push(Q::zero());
    }
    let mut c = vec![Q::zero(); n];
    c[z] = Q::one();
    match minimize(&a, &b, &c) {
        LpOutcome::Optimal(v, _) => Rational::new(
            v.numer().to_i64().expect("small LP value"),
            v.denom().to_i64().expect("small LP value"),
        ),
        other => unreachable!("throughput LP is always feasible and bounded: {other:?}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn spec_examples() {
        let cases = [("1*p01", r(1, 2)), ("3*p015+1*p23", r(1, 1)), ("2*p0+1*p01", r(2, 1))];
        for (pu, want) in cases {
            let pu: PortUsage = pu.parse().unwrap();
            assert_eq!(min_max_load(&pu), want, "{pu}");
        }
    }

    #[test]
    fn generic_lp() {
        // min -x - y, x + y + s = 4, x - y + t = 2.
        let a = vec![vec![q(1), q(1), q(1), q(0)], vec![q(1), q(-1), q(0), q(1)]];
        let b = vec![q(4), q(2)];
        let c = vec![q(-1), q(-1), q(0), q(0)];
        match minimize(&a, &b, &c) {
            LpOutcome::Optimal(v, _) => assert_eq!(v, q(-4)),
            o => panic!("{o:?}"),
        }
        // x = -1 is infeasible.
        assert_eq!(minimize(&[vec![q(1)]], &[q(-1)], &[q(0)]), LpOutcome::Infeasible);
        // min -x with x - y = 0 is unbounded.
        assert_eq!(minimize(&[vec![q(1), q(-1)]], &[q(0)], &[q(-1), q(0)]), LpOutcome::Unbounded);
    }
}
