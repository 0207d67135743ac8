//! The sphere-class lattice ℤ^k with two rational period homomorphisms ω₀, ω₁.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rational::{in_unit_interval, serialize_rational, Rational};

/// A lattice vector `A`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Exponent(pub Vec<i64>);

impl Exponent {
    pub fn zero(rank: usize) -> Exponent {
        Exponent(vec![0; rank])
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn scale(&self, n: i64) -> Exponent {
        Exponent(self.0.iter().map(|c| c * n).collect())
    }
}

impl Add for &Exponent {
    type Output = Exponent;
    fn add(self, rhs: &Exponent) -> Exponent {
        debug_assert_eq!(self.rank(), rhs.rank());
        Exponent(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &Exponent {
    type Output = Exponent;
    fn sub(self, rhs: &Exponent) -> Exponent {
        debug_assert_eq!(self.rank(), rhs.rank());
        Exponent(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for &Exponent {
    type Output = Exponent;
    fn neg(self) -> Exponent {
        Exponent(self.0.iter().map(|a| -a).collect())
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str("]")
    }
}

/// The pair `(ω₀(A), ω₁(A))`. The derived order is lexicographic.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct PeriodPair {
    #[serde(serialize_with = "serialize_rational")]
    pub g0: Rational,
    #[serde(serialize_with = "serialize_rational")]
    pub g1: Rational,
}

impl PeriodPair {
    pub fn new(g0: Rational, g1: Rational) -> PeriodPair {
        PeriodPair { g0, g1 }
    }

    pub fn zero() -> PeriodPair {
        PeriodPair::new(Rational::zero(), Rational::zero())
    }

    /// `(1−t)·g0 + t·g1`, no range check.
    pub fn weight(&self, t: &Rational) -> Rational {
        (Rational::one() - t) * &self.g0 + t * &self.g1
    }

    pub fn min_coord(&self) -> &Rational {
        std::cmp::min(&self.g0, &self.g1)
    }
}

impl Add for &PeriodPair {
    type Output = PeriodPair;
    fn add(self, rhs: &PeriodPair) -> PeriodPair {
        PeriodPair::new(&self.g0 + &rhs.g0, &self.g1 + &rhs.g1)
    }
}

impl Sub for &PeriodPair {
    type Output = PeriodPair;
    fn sub(self, rhs: &PeriodPair) -> PeriodPair {
        PeriodPair::new(&self.g0 - &rhs.g0, &self.g1 - &rhs.g1)
    }
}

impl fmt::Display for PeriodPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.g0, self.g1)
    }
}

/// `{base + n·direction : n ≥ 0}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RaySupport {
    pub base: Exponent,
    pub direction: Exponent,
}

impl RaySupport {
    pub fn new(base: Exponent, direction: Exponent) -> Result<RaySupport> {
        if base.rank() != direction.rank() {
            return Err(Error::DimensionMismatch {
                expected: base.rank(),
                found: direction.rank(),
            });
        }
        if direction.is_zero() {
            return Err(Error::InvalidArgument(
                "ray direction must be nonzero".into(),
            ));
        }
        Ok(RaySupport { base, direction })
    }

    /// The `n`-th lattice point of the ray.
    pub fn point(&self, n: i64) -> Exponent {
        &self.base + &self.direction.scale(n)
    }
}

/// Two period vectors on ℤ^k. A rank-0 system models the trivial lattice.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct PeriodSystem {
    #[serde(serialize_with = "serialize_vec")]
    omega0: Vec<Rational>,
    #[serde(serialize_with = "serialize_vec")]
    omega1: Vec<Rational>,
}

fn serialize_vec<S: serde::Serializer>(
    v: &[Rational],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for r in v {
        seq.serialize_element(&crate::rational::format_rational(r))?;
    }
    seq.end()
}

impl PeriodSystem {
    pub fn new(omega0: Vec<Rational>, omega1: Vec<Rational>) -> Result<PeriodSystem> {
        if omega0.len() != omega1.len() {
            return Err(Error::DimensionMismatch {
                expected: omega0.len(),
                found: omega1.len(),
            });
        }
        Ok(PeriodSystem { omega0, omega1 })
    }

    pub fn trivial() -> PeriodSystem {
        PeriodSystem {
            omega0: vec![],
            omega1: vec![],
        }
    }

    pub fn rank(&self) -> usize {
        self.omega0.len()
    }

    pub fn omega0(&self) -> &[Rational] {
        &self.omega0
    }

    pub fn omega1(&self) -> &[Rational] {
        &self.omega1
    }

    /// False when ω₀ and ω₁ are proportional (including when either vanishes).
    pub fn is_generic(&self) -> bool {
        let k = self.rank();
        (0..k).any(|i| {
            (i + 1..k)
                .any(|j| &self.omega0[i] * &self.omega1[j] != &self.omega0[j] * &self.omega1[i])
        })
    }

    fn check(&self, a: &Exponent) -> Result<()> {
        if a.rank() != self.rank() {
            return Err(Error::DimensionMismatch {
                expected: self.rank(),
                found: a.rank(),
            });
        }
        Ok(())
    }

    pub fn period_pair(&self, a: &Exponent) -> Result<PeriodPair> {
        self.check(a)?;
        Ok(self.pair_unchecked(a))
    }

    pub(crate) fn pair_unchecked(&self, a: &Exponent) -> PeriodPair {
        let mut g0 = Rational::zero();
        let mut g1 = Rational::zero();
        for ((c, w0), w1) in a.0.iter().zip(&self.omega0).zip(&self.omega1) {
            if *c != 0 {
                let c = Rational::from_integer((*c).into());
                g0 += &c * w0;
                g1 += c * w1;
            }
        }
        PeriodPair::new(g0, g1)
    }

    pub fn period_at(&self, a: &Exponent, t: &Rational) -> Result<Rational> {
        check_t(t)?;
        Ok(self.period_pair(a)?.weight(t))
    }

    pub fn ray_finite_for(&self, r: &RaySupport, t: &Rational) -> Result<bool> {
        Ok(self.period_at(&r.direction, t)?.is_positive())
    }

    pub fn ray_finite_interval(&self, r: &RaySupport) -> Result<bool> {
        let p = self.period_pair(&r.direction)?;
        Ok(p.g0.is_positive() && p.g1.is_positive())
    }
}

pub(crate) fn check_t(t: &Rational) -> Result<()> {
    if in_unit_interval(t) {
        Ok(())
    } else {
        Err(Error::OutOfUnitInterval {
            name: "t",
            value: t.clone(),
        })
    }
}
