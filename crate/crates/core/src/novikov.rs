//! Truncated Novikov series in three ring modes, the rank-2 valuation and the two comparison orders.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exponents::{check_t, Exponent, PeriodPair, PeriodSystem};
use crate::field::Field;
use crate::rational::{format_rational, Extended, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum RingMode {
    Omega0,
    Omega1,
    Interval,
}

impl RingMode {
    /// The value compared against the cutoff by the truncation predicate.
    pub fn depth(&self, p: &PeriodPair) -> Rational {
        match self {
            RingMode::Omega0 => p.g0.clone(),
            RingMode::Omega1 => p.g1.clone(),
            RingMode::Interval => p.min_coord().clone(),
        }
    }
}

impl fmt::Display for RingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RingMode::Omega0 => "omega0",
            RingMode::Omega1 => "omega1",
            RingMode::Interval => "interval",
        })
    }
}

/// Everything two elements must share to be combined.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Ring {
    pub system: PeriodSystem,
    pub field: Field,
    pub mode: RingMode,
    pub cutoff: Rational,
}

impl Ring {
    pub fn new(
        system: PeriodSystem,
        field: Field,
        mode: RingMode,
        cutoff: Rational,
    ) -> Result<Arc<Ring>> {
        if !cutoff.is_positive() {
            return Err(Error::NonPositiveCutoff);
        }
        Ok(Arc::new(Ring {
            system,
            field,
            mode,
            cutoff,
        }))
    }

    pub fn rank(&self) -> usize {
        self.system.rank()
    }

    pub fn keeps(&self, a: &Exponent) -> bool {
        self.keeps_pair(&self.system.pair_unchecked(a))
    }

    pub fn keeps_pair(&self, p: &PeriodPair) -> bool {
        self.mode.depth(p) <= self.cutoff
    }

    /// Same ring with another mode.
    pub fn with_mode(&self, mode: RingMode) -> Arc<Ring> {
        Arc::new(Ring {
            mode,
            ..self.clone()
        })
    }

    /// Same ring with another cutoff.
    pub fn with_cutoff(&self, cutoff: Rational) -> Result<Arc<Ring>> {
        Ring::new(self.system.clone(), self.field, self.mode, cutoff)
    }
}

pub(crate) fn same_ring(a: &Arc<Ring>, b: &Arc<Ring>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// `ν̄` value: a period pair, or `(+∞, +∞)` for zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Rank2Value {
    Finite(PeriodPair),
    Infinite,
}

impl Rank2Value {
    pub fn finite(&self) -> Option<&PeriodPair> {
        match self {
            Rank2Value::Finite(p) => Some(p),
            Rank2Value::Infinite => None,
        }
    }

    pub fn first(&self) -> Extended {
        match self {
            Rank2Value::Finite(p) => Extended::Finite(p.g0.clone()),
            Rank2Value::Infinite => Extended::PosInf,
        }
    }

    pub fn second(&self) -> Extended {
        match self {
            Rank2Value::Finite(p) => Extended::Finite(p.g1.clone()),
            Rank2Value::Infinite => Extended::PosInf,
        }
    }
}

impl fmt::Display for Rank2Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rank2Value::Finite(p) => write!(f, "{p}"),
            Rank2Value::Infinite => f.write_str("(inf, inf)"),
        }
    }
}

/// Order used to rank valuations.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Order {
    Lex,
    /// t-weighted lexicographic order at the given `t`.
    Weighted(#[serde(serialize_with = "crate::rational::serialize_rational")] Rational),
}

impl Order {
    pub fn weighted(t: Rational) -> Result<Order> {
        check_t(&t)?;
        Ok(Order::Weighted(t))
    }

    pub fn cmp_pairs(&self, p: &PeriodPair, q: &PeriodPair) -> Ordering {
        match self {
            Order::Lex => p.cmp(q),
            Order::Weighted(t) => p
                .weight(t)
                .cmp(&q.weight(t))
                .then_with(|| p.g1.cmp(&q.g1))
                .then_with(|| p.g0.cmp(&q.g0)),
        }
    }

    pub fn cmp(&self, p: &Rank2Value, q: &Rank2Value) -> Ordering {
        match (p, q) {
            (Rank2Value::Finite(a), Rank2Value::Finite(b)) => self.cmp_pairs(a, b),
            (Rank2Value::Finite(_), Rank2Value::Infinite) => Ordering::Less,
            (Rank2Value::Infinite, Rank2Value::Finite(_)) => Ordering::Greater,
            (Rank2Value::Infinite, Rank2Value::Infinite) => Ordering::Equal,
        }
    }
}

pub fn compare_lex(p: &Rank2Value, q: &Rank2Value) -> Ordering {
    Order::Lex.cmp(p, q)
}

/// Compares `(1−t)a + tb`, ties broken by the second coordinate (then by the first, which only matters at `t = 1`).
pub fn compare_t_weighted(p: &Rank2Value, q: &Rank2Value, t: &Rational) -> Result<Ordering> {
    check_t(t)?;
    Ok(Order::Weighted(t.clone()).cmp(p, q))
}

/// A finite Novikov sum `Σ a_A T^A` in a given ring.
#[derive(Clone, Debug)]
pub struct NovikovElement {
    ring: Arc<Ring>,
    terms: BTreeMap<Exponent, Rational>,
}

impl PartialEq for NovikovElement {
    fn eq(&self, other: &Self) -> bool {
        same_ring(&self.ring, &other.ring) && self.terms == other.terms
    }
}

impl Eq for NovikovElement {}

impl NovikovElement {
    pub fn zero(ring: &Arc<Ring>) -> NovikovElement {
        NovikovElement {
            ring: ring.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn one(ring: &Arc<Ring>) -> NovikovElement {
        NovikovElement::monomial(ring, Exponent::zero(ring.rank()), Rational::one())
            .expect("the unit is never truncated")
    }

    /// `c·T^A`, truncated. Coefficients are mapped into the field.
    pub fn monomial(ring: &Arc<Ring>, a: Exponent, c: Rational) -> Result<NovikovElement> {
        NovikovElement::from_terms(ring, [(a, c)])
    }

    /// Builds an element from arbitrary terms; repeated exponents are summed.
    pub fn from_terms(
        ring: &Arc<Ring>,
        terms: impl IntoIterator<Item = (Exponent, Rational)>,
    ) -> Result<NovikovElement> {
        let mut out = NovikovElement::zero(ring);
        for (a, c) in terms {
            if a.rank() != ring.rank() {
                return Err(Error::DimensionMismatch {
                    expected: ring.rank(),
                    found: a.rank(),
                });
            }
            let c = ring.field.from_rational(&c)?;
            out.add_term(a, &c);
        }
        Ok(out)
    }

    pub fn ring(&self) -> &Arc<Ring> {
        &self.ring
    }

    pub fn terms(&self) -> &BTreeMap<Exponent, Rational> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Adds `c·T^a` in place (drops it if truncated). `c` must already be a field element.
    pub(crate) fn add_term(&mut self, a: Exponent, c: &Rational) {
        if c.is_zero() || !self.ring.keeps(&a) {
            return;
        }
        let f = self.ring.field;
        match self.terms.entry(a) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c.clone());
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let s = f.add(e.get(), c);
                if s.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = s;
                }
            }
        }
    }

    fn check_ring(&self, other: &NovikovElement) -> Result<()> {
        if same_ring(&self.ring, &other.ring) {
            Ok(())
        } else {
            Err(Error::RingMismatch)
        }
    }

    pub fn add(&self, other: &NovikovElement) -> Result<NovikovElement> {
        self.check_ring(other)?;
        let mut out = self.clone();
        for (a, c) in &other.terms {
            out.add_term(a.clone(), c);
        }
        Ok(out)
    }

    pub fn neg(&self) -> NovikovElement {
        let f = self.ring.field;
        NovikovElement {
            ring: self.ring.clone(),
            terms: self
                .terms
                .iter()
                .map(|(a, c)| (a.clone(), f.neg(c)))
                .collect(),
        }
    }

    pub fn sub(&self, other: &NovikovElement) -> Result<NovikovElement> {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &NovikovElement) -> Result<NovikovElement> {
        self.check_ring(other)?;
        let f = self.ring.field;
        let mut out = NovikovElement::zero(&self.ring);
        for (a, c) in &self.terms {
            for (b, d) in &other.terms {
                out.add_term(a + b, &f.mul(c, d));
            }
        }
        Ok(out)
    }

    /// Multiplies by `c·T^g`. `c` must already be a field element.
    pub fn mul_monomial(&self, g: &Exponent, c: &Rational) -> NovikovElement {
        let f = self.ring.field;
        let mut out = NovikovElement::zero(&self.ring);
        if c.is_zero() {
            return out;
        }
        for (a, d) in &self.terms {
            out.add_term(a + g, &f.mul(c, d));
        }
        out
    }

    pub fn scale(&self, c: &Rational) -> NovikovElement {
        self.mul_monomial(&Exponent::zero(self.ring.rank()), c)
    }

    /// Re-truncates into another ring over the same period system and field.
    pub fn recast(&self, ring: &Arc<Ring>) -> Result<NovikovElement> {
        if ring.system != self.ring.system || ring.field != self.ring.field {
            return Err(Error::RingMismatch);
        }
        let mut out = NovikovElement::zero(ring);
        for (a, c) in &self.terms {
            out.add_term(a.clone(), c);
        }
        Ok(out)
    }

    pub fn period_pairs(&self) -> impl Iterator<Item = (PeriodPair, &Exponent, &Rational)> + '_ {
        self.terms
            .iter()
            .map(|(a, c)| (self.ring.system.pair_unchecked(a), a, c))
    }

    /// Lexicographic minimum of the period pairs of the support.
    pub fn valuation(&self) -> Rank2Value {
        self.period_pairs()
            .map(|(p, _, _)| p)
            .min()
            .map_or(Rank2Value::Infinite, Rank2Value::Finite)
    }

    /// Minimum of the order over the support.
    pub fn valuation_in(&self, order: &Order) -> Rank2Value {
        self.period_pairs()
            .map(|(p, _, _)| p)
            .min_by(|p, q| order.cmp_pairs(p, q))
            .map_or(Rank2Value::Infinite, Rank2Value::Finite)
    }

    /// `min_A ω_t(A)` over the support; `+∞` for zero.
    pub fn valuation_at(&self, t: &Rational) -> Result<Extended> {
        check_t(t)?;
        Ok(self
            .period_pairs()
            .map(|(p, _, _)| p.weight(t))
            .min()
            .map_or(Extended::PosInf, Extended::Finite))
    }

    /// The exponent of a unit's leading monomial, if the element is a unit.
    ///
    /// In `Omega0`/`Omega1` mode the minimum of the relevant period must be attained by exactly one monomial.
    /// In `Interval` mode one monomial must lie strictly below every other term in both periods.
    pub fn unit_leading(&self) -> Option<&Exponent> {
        let pairs: Vec<_> = self.period_pairs().collect();
        let below_all = |i: usize, below: &dyn Fn(&PeriodPair, &PeriodPair) -> bool| {
            pairs
                .iter()
                .enumerate()
                .all(|(j, q)| j == i || below(&pairs[i].0, &q.0))
        };
        let i = match self.ring.mode {
            RingMode::Omega0 => (0..pairs.len()).find(|&i| below_all(i, &|p, q| p.g0 < q.g0))?,
            RingMode::Omega1 => (0..pairs.len()).find(|&i| below_all(i, &|p, q| p.g1 < q.g1))?,
            RingMode::Interval => {
                (0..pairs.len()).find(|&i| below_all(i, &|p, q| p.g0 < q.g0 && p.g1 < q.g1))?
            }
        };
        Some(pairs[i].1)
    }

    pub fn is_unit(&self) -> bool {
        self.unit_leading().is_some()
    }

    /// Inverse of a unit, exact up to the ring's truncation.
    pub fn inverse(&self) -> Result<NovikovElement> {
        let a = self.unit_leading().ok_or(Error::NotUnit)?.clone();
        let f = self.ring.field;
        let c = self.terms[&a].clone();
        let cinv = f.inv(&c);
        // x = c·T^a·(1 − y); the series Σ yⁿ is computed with room for the T^{−a} shift.
        let pa = self.ring.system.pair_unchecked(&a);
        let slack = pa.g0.abs() + pa.g1.abs();
        let wide = self.ring.with_cutoff(&self.ring.cutoff + slack)?;
        let one = NovikovElement::one(&wide);
        let unit_part = self.recast(&wide)?.mul_monomial(&-&a, &cinv);
        let y = one.sub(&unit_part)?;
        let mut sum = one.clone();
        let mut power = one;
        loop {
            power = power.mul(&y)?;
            if power.is_zero() {
                break;
            }
            sum = sum.add(&power)?;
        }
        sum.mul_monomial(&-&a, &cinv).recast(&self.ring)
    }
}

/// Term order used for rendering: lexicographic period pair, then coordinates.
pub(crate) fn sorted_terms(x: &NovikovElement) -> Vec<(PeriodPair, &Exponent, &Rational)> {
    let mut v: Vec<_> = x.period_pairs().collect();
    v.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    v
}

impl fmt::Display for NovikovElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        for (i, (_, a, c)) in sorted_terms(self).into_iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}{}", format_rational(c), a)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};

    fn ring(mode: RingMode, cutoff: i64, field: Field) -> Arc<Ring> {
        let sys = PeriodSystem::new(vec![qi(1), qi(0)], vec![qi(0), qi(1)]).unwrap();
        Ring::new(sys, field, mode, qi(cutoff)).unwrap()
    }

    fn mono(r: &Arc<Ring>, a: Vec<i64>, c: i64) -> NovikovElement {
        NovikovElement::monomial(r, Exponent(a), qi(c)).unwrap()
    }

    fn telescoping(mode: RingMode) -> NovikovElement {
        let r = ring(mode, 5, Field::Rationals);
        let n = 6;
        let x = mono(&r, vec![0, 0], 1)
            .sub(&mono(&r, vec![0, 1], 1))
            .unwrap();
        let mut s = NovikovElement::zero(&r);
        for k in 0..=n {
            s = s.add(&mono(&r, vec![0, k], 1)).unwrap();
        }
        x.mul(&s).unwrap()
    }

    #[test]
    fn telescoping_products() {
        let p1 = telescoping(RingMode::Omega1);
        assert_eq!(p1, NovikovElement::one(p1.ring()));
        let pi = telescoping(RingMode::Interval);
        let r = pi.ring().clone();
        let expected = mono(&r, vec![0, 0], 1)
            .sub(&mono(&r, vec![0, 7], 1))
            .unwrap();
        assert_eq!(pi, expected);
    }

    #[test]
    fn identities() {
        let r = ring(RingMode::Interval, 5, Field::Rationals);
        let x = mono(&r, vec![1, 2], 3)
            .add(&mono(&r, vec![0, 1], -1))
            .unwrap();
        assert!(x.mul(&NovikovElement::zero(&r)).unwrap().is_zero());
        assert_eq!(x.mul(&NovikovElement::one(&r)).unwrap(), x);
    }

    #[test]
    fn valuations() {
        let r = ring(RingMode::Interval, 20, Field::default());
        assert_eq!(NovikovElement::zero(&r).valuation(), Rank2Value::Infinite);
        let j = 3;
        let v = mono(&r, vec![0, j], 1)
            .sub(&mono(&r, vec![0, j + 1], 1))
            .unwrap();
        assert_eq!(
            v.valuation(),
            Rank2Value::Finite(PeriodPair::new(qi(0), qi(j)))
        );
        let w = mono(&r, vec![1, 5], 1)
            .add(&mono(&r, vec![2, 0], 1))
            .unwrap();
        assert_eq!(
            w.valuation(),
            Rank2Value::Finite(PeriodPair::new(qi(1), qi(5)))
        );

        let b = mono(&r, vec![0, 1], 1);
        assert_eq!(b.valuation_at(&q(1, 2)).unwrap(), Extended::Finite(q(1, 2)));
        let one_b = NovikovElement::one(&r).add(&b).unwrap();
        assert_eq!(
            one_b.valuation_at(&q(3, 7)).unwrap(),
            Extended::Finite(qi(0))
        );
        assert_eq!(
            NovikovElement::zero(&r).valuation_at(&qi(0)).unwrap(),
            Extended::PosInf
        );
    }

    #[test]
    fn orders() {
        let v = |a: i64, b: i64| Rank2Value::Finite(PeriodPair::new(qi(a), qi(b)));
        assert_eq!(compare_lex(&v(1, -5), &v(0, 100)), Ordering::Greater);
        let h = q(1, 2);
        assert_eq!(
            compare_t_weighted(&v(0, 2), &v(1, 0), &h).unwrap(),
            Ordering::Greater
        );
        assert_eq!(
            compare_t_weighted(&v(0, 2), &v(2, 0), &h).unwrap(),
            Ordering::Greater
        );
        assert_eq!(
            compare_t_weighted(&v(0, 1), &v(1, 1), &qi(1)).unwrap(),
            Ordering::Less
        );
        assert_eq!(compare_lex(&v(9, 9), &Rank2Value::Infinite), Ordering::Less);
    }

    #[test]
    fn units_by_mode() {
        for (mode, unit) in [
            (RingMode::Omega0, false),
            (RingMode::Omega1, true),
            (RingMode::Interval, false),
        ] {
            let r = ring(mode, 6, Field::default());
            let x = mono(&r, vec![0, 0], 1)
                .sub(&mono(&r, vec![0, 1], 1))
                .unwrap();
            assert_eq!(x.is_unit(), unit, "{mode}");
            if unit {
                let inv = x.inverse().unwrap();
                assert_eq!(x.mul(&inv).unwrap(), NovikovElement::one(&r));
            }
        }
        let r = ring(RingMode::Interval, 6, Field::Rationals);
        let x = mono(&r, vec![0, 0], 2)
            .add(&mono(&r, vec![1, 1], 1))
            .unwrap();
        let inv = x.inverse().unwrap();
        assert_eq!(x.mul(&inv).unwrap(), NovikovElement::one(&r));
    }

    #[test]
    fn rendering() {
        let r = ring(RingMode::Interval, 6, Field::Rationals);
        let x = mono(&r, vec![0, 1], -1)
            .add(&mono(&r, vec![0, 0], 1))
            .unwrap();
        assert_eq!(x.to_string(), "1[0,0] -1[0,1]");
        assert_eq!(NovikovElement::zero(&r).to_string(), "0");
    }
}
