//! Coefficient fields: a prime field ℤ/p or the rationals.
//!
//! Coefficients are always stored as [`Rational`]. In a prime field they are kept
//! as integers in `0..p`.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::rational::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Field {
    Prime(u64),
    Rationals,
}

impl Default for Field {
    fn default() -> Self {
        Field::Prime(2)
    }
}

impl Field {
    pub fn prime(p: u64) -> Result<Field> {
        if p < 2
            || (2..p)
                .take_while(|d| d * d <= p)
                .any(|d| p.is_multiple_of(d))
        {
            return Err(Error::InvalidArgument(format!("{p} is not prime")));
        }
        Ok(Field::Prime(p))
    }

    pub fn characteristic(&self) -> u64 {
        match self {
            Field::Prime(p) => *p,
            Field::Rationals => 0,
        }
    }

    /// Maps an arbitrary rational into the field.
    ///
    /// Fails in ℤ/p when the denominator is divisible by p.
    pub fn from_rational(&self, c: &Rational) -> Result<Rational> {
        match self {
            Field::Rationals => Ok(c.clone()),
            Field::Prime(p) => {
                let p = BigInt::from(*p);
                let den = c.denom().mod_floor(&p);
                if den.is_zero() {
                    return Err(Error::InvalidArgument(format!(
                        "coefficient {c} has no image in Z/{p}"
                    )));
                }
                let num = c.numer().mod_floor(&p);
                let inv = den.modpow(&(&p - 2u32), &p);
                Ok(Rational::from_integer((num * inv).mod_floor(&p)))
            }
        }
    }

    pub fn from_i64(&self, c: i64) -> Rational {
        self.reduce(Rational::from_integer(BigInt::from(c)))
    }

    fn reduce(&self, c: Rational) -> Rational {
        match self {
            Field::Rationals => c,
            Field::Prime(p) => Rational::from_integer(c.to_integer().mod_floor(&BigInt::from(*p))),
        }
    }

    pub fn add(&self, a: &Rational, b: &Rational) -> Rational {
        self.reduce(a + b)
    }

    pub fn sub(&self, a: &Rational, b: &Rational) -> Rational {
        self.reduce(a - b)
    }

    pub fn neg(&self, a: &Rational) -> Rational {
        self.reduce(-a)
    }

    pub fn mul(&self, a: &Rational, b: &Rational) -> Rational {
        self.reduce(a * b)
    }

    /// Multiplicative inverse. Panics on zero.
    pub fn inv(&self, a: &Rational) -> Rational {
        assert!(!a.is_zero(), "inverse of zero");
        match self {
            Field::Rationals => a.recip(),
            Field::Prime(p) => {
                let p = BigInt::from(*p);
                Rational::from_integer(a.to_integer().modpow(&(&p - 2u32), &p))
            }
        }
    }

    pub fn one(&self) -> Rational {
        Rational::one()
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Prime(2) => f.write_str("f2"),
            Field::Prime(p) => write!(f, "fp {p}"),
            Field::Rationals => f.write_str("q"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};

    #[test]
    fn prime_field_arithmetic() {
        let f = Field::prime(5).unwrap();
        assert_eq!(f.add(&qi(3), &qi(4)), qi(2));
        assert_eq!(f.neg(&qi(1)), qi(4));
        assert_eq!(f.mul(&qi(3), &f.inv(&qi(3))), qi(1));
        assert_eq!(f.from_rational(&q(1, 2)).unwrap(), qi(3));
        assert!(f.from_rational(&q(1, 5)).is_err());
        assert!(Field::prime(9).is_err());
    }

    #[test]
    fn f2_signs_collapse() {
        let f = Field::default();
        assert_eq!(f.from_i64(-1), qi(1));
        assert_eq!(f.add(&qi(1), &qi(1)), qi(0));
    }
}
