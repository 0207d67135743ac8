//! Exact rational scalars and their extension by ±∞.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Serialize, Serializer};

/// Arbitrary precision rational number used for every period, action and filtration value.
pub type Rational = BigRational;

/// Shorthand for `n / d`.
///
/// Panics if `d == 0`.
pub fn q(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Integer as a rational.
pub fn qi(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Parses `p` or `p/q` (optional leading sign, decimal digits only).
pub fn parse_rational(s: &str) -> Result<Rational, String> {
    let s = s.trim();
    let parse_int = |part: &str| -> Result<BigInt, String> {
        let digits = part.strip_prefix(['-', '+']).unwrap_or(part);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("invalid rational `{s}`"));
        }
        part.parse::<BigInt>()
            .map_err(|_| format!("invalid rational `{s}`"))
    };
    match s.split_once('/') {
        None => Ok(Rational::from_integer(parse_int(s)?)),
        Some((n, d)) => {
            let n = parse_int(n)?;
            let d = parse_int(d)?;
            if d.is_zero() {
                return Err(format!("zero denominator in `{s}`"));
            }
            Ok(Rational::new(n, d))
        }
    }
}

/// Canonical text form: `p` for integers, `p/q` otherwise (reduced, positive denominator).
pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub(crate) fn serialize_rational<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_rational(r))
}

/// Checks `0 <= t <= 1`.
pub(crate) fn in_unit_interval(t: &Rational) -> bool {
    !t.is_negative() && *t <= Rational::one()
}

/// A rational extended by −∞ and +∞.
///
/// Filtration levels of the zero chain are `NegInf`; valuations of zero are `PosInf`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Extended {
    NegInf,
    Finite(Rational),
    PosInf,
}

impl Extended {
    pub fn finite(&self) -> Option<&Rational> {
        match self {
            Extended::Finite(r) => Some(r),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn neg(&self) -> Extended {
        match self {
            Extended::NegInf => Extended::PosInf,
            Extended::PosInf => Extended::NegInf,
            Extended::Finite(r) => Extended::Finite(-r),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Extended::NegInf => 0,
            Extended::Finite(_) => 1,
            Extended::PosInf => 2,
        }
    }
}

impl From<Rational> for Extended {
    fn from(r: Rational) -> Self {
        Extended::Finite(r)
    }
}

impl PartialOrd for Extended {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Extended {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Extended::Finite(a), Extended::Finite(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::NegInf => f.write_str("-inf"),
            Extended::PosInf => f.write_str("inf"),
            Extended::Finite(r) => f.write_str(&format_rational(r)),
        }
    }
}

impl Serialize for Extended {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format() {
        assert_eq!(parse_rational("3/6").unwrap(), q(1, 2));
        assert_eq!(parse_rational("-4").unwrap(), qi(-4));
        assert_eq!(parse_rational(" 2/-4 ").unwrap(), q(-1, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("0.5").is_err());
        assert!(parse_rational("").is_err());
        assert_eq!(format_rational(&q(-6, 4)), "-3/2");
        assert_eq!(format_rational(&qi(7)), "7");
    }

    #[test]
    fn extended_order() {
        let mut v = vec![
            Extended::PosInf,
            Extended::Finite(qi(3)),
            Extended::NegInf,
            Extended::Finite(q(-1, 2)),
        ];
        v.sort();
        assert_eq!(
            v,
            vec![
                Extended::NegInf,
                Extended::Finite(q(-1, 2)),
                Extended::Finite(qi(3)),
                Extended::PosInf
            ]
        );
        assert_eq!(Extended::NegInf.neg(), Extended::PosInf);
    }
}
