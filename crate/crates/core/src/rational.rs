//! Exact rational arithmetic used for cycle counts and port shares.

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};

pub type Rational = Ratio<i64>;

pub fn int(n: i64) -> Rational {
    Rational::from_integer(n)
}

/// Formats as `n` for integers and `n/d` otherwise.
pub fn format(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn parse(s: &str) -> Option<Rational> {
    let s = s.trim();
    match s.split_once('/') {
        None => s.parse().ok().map(int),
        Some((n, d)) => {
            let n: i64 = n.trim().parse().ok()?;
            let d: i64 = d.trim().parse().ok()?;
            (d != 0).then(|| Rational::new(n, d))
        }
    }
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Nearest integer, ties away from zero.
pub fn round(r: &Rational) -> i64 {
    r.round().to_integer()
}

pub fn ceil(r: &Rational) -> i64 {
    r.ceil().to_integer()
}

/// Distance to the nearest integer.
pub fn distance_to_integer(r: &Rational) -> Rational {
    (r - r.round()).abs()
}

pub fn mean(values: &[Rational]) -> Rational {
    if values.is_empty() {
        return Rational::zero();
    }
    let sum: Rational = values.iter().copied().sum();
    sum / int(values.len() as i64)
}

/// Median of the values; the mean of the middle pair for even lengths.
pub fn median(values: &[Rational]) -> Rational {
    if values.is_empty() {
        return Rational::zero();
    }
    let mut v = values.to_vec();
    v.sort();
    let n = v.len();
    if n.is_odd() {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / int(2)
    }
}

pub mod serde_str {
    use super::{format, parse, Rational};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let raw = String::deserialize(d)?;
        parse(&raw).ok_or_else(|| serde::de::Error::custom(format!("bad rational `{raw}`")))
    }
}
