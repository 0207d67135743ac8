//! The φ-iteration, best approximation, the divergence check and persistence reduction.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::complex::{Chain, ComplexData, Matrix};
use crate::error::{Error, Result};
use crate::exponents::{check_t, Exponent, PeriodPair};
use crate::field::Field;
use crate::novikov::{same_ring, NovikovElement, Order, Rank2Value, Ring};
use crate::rational::{format_rational, serialize_rational, Extended, Rational};

/// Consecutive trace entries with a constant coordinate needed to call a divergence one-sided.
pub const DIVERGENCE_WINDOW: usize = 8;
/// Hard cap on φ-steps per reduction.
pub const MAX_STEPS: usize = 10_000;
/// Cap on the number of monomials gathered for one φ-step's linear system.
const MAX_LEVEL_SUPPORT: usize = 96;

type Key = (usize, Exponent);
type Flat = BTreeMap<Key, Rational>;

fn flat_of(chain: &Chain) -> Flat {
    let mut out = Flat::new();
    for (i, c) in chain.coeffs() {
        for (a, x) in c.terms() {
            out.insert((*i, a.clone()), x.clone());
        }
    }
    out
}

fn chain_of(ring: &Arc<Ring>, flat: &Flat) -> Chain {
    let mut by_row: BTreeMap<usize, Vec<(Exponent, Rational)>> = BTreeMap::new();
    for ((i, a), c) in flat {
        by_row.entry(*i).or_default().push((a.clone(), c.clone()));
    }
    Chain::from_coeffs(
        ring,
        by_row.into_iter().map(|(i, ts)| {
            (
                i,
                NovikovElement::from_terms(ring, ts).expect("field elements"),
            )
        }),
    )
    .expect("same ring")
}

/// `target += c·T^g·src` without truncation.
fn shift_add(field: Field, target: &mut Flat, c: &Rational, g: &Exponent, src: &Flat) {
    for ((i, a), x) in src {
        let key = (*i, a + g);
        let add = field.mul(c, x);
        let sum = match target.get(&key) {
            Some(y) => field.add(y, &add),
            None => add,
        };
        if sum.is_zero() {
            target.remove(&key);
        } else {
            target.insert(key, sum);
        }
    }
}

/// `target += c·T^g·src`, truncated.
fn axpy(ring: &Ring, target: &mut Flat, c: &Rational, g: &Exponent, src: &Flat) {
    let f = ring.field;
    for ((i, a), x) in src {
        let b = a + g;
        if !ring.keeps(&b) {
            continue;
        }
        let add = f.mul(c, x);
        let key = (*i, b);
        let sum = match target.get(&key) {
            Some(y) => f.add(y, &add),
            None => add,
        };
        if sum.is_zero() {
            target.remove(&key);
        } else {
            target.insert(key, sum);
        }
    }
}

/// A linear map given by its columns, with an optional per-row pair shift.
///
/// The valuation of `T^A·e_r` is `pair(A) + shift_r`; with `shift_r = −(η_r(0), η_r(1))`
/// the t-weighted valuation of a chain is `−ℓ_t`.
#[derive(Clone, Debug)]
pub struct Operator {
    ring: Arc<Ring>,
    rows: usize,
    columns: Vec<Chain>,
    shifts: Vec<PeriodPair>,
    shifted: bool,
}

impl Operator {
    pub fn new(ring: &Arc<Ring>, rows: usize, columns: Vec<Chain>) -> Result<Operator> {
        let shifts = vec![PeriodPair::zero(); rows];
        let mut op = Operator::with_shifts(ring, columns, shifts)?;
        op.shifted = false;
        Ok(op)
    }

    pub fn with_shifts(
        ring: &Arc<Ring>,
        columns: Vec<Chain>,
        shifts: Vec<PeriodPair>,
    ) -> Result<Operator> {
        let rows = shifts.len();
        for c in &columns {
            if !same_ring(ring, c.ring()) {
                return Err(Error::RingMismatch);
            }
            if let Some(m) = c.max_index() {
                if m >= rows {
                    return Err(Error::DimensionMismatch {
                        expected: rows,
                        found: m + 1,
                    });
                }
            }
        }
        Ok(Operator {
            ring: ring.clone(),
            rows,
            columns,
            shifts,
            shifted: true,
        })
    }

    pub fn from_matrix(m: &Matrix) -> Operator {
        let cols = (0..m.cols()).map(|j| m.column(j)).collect();
        Operator::new(m.ring(), m.rows(), cols).expect("matrix columns fit")
    }

    /// The columns of `∂_s`, with shifts `−(η_r(0), η_r(1))`.
    pub fn boundary(cx: &ComplexData, s: &Rational) -> Result<Operator> {
        let m = cx.boundary().get(s)?;
        let cols = (0..m.cols()).map(|j| m.column(j)).collect();
        Operator::with_shifts(m.ring(), cols, generator_shifts(cx))
    }

    pub fn ring(&self) -> &Arc<Ring> {
        &self.ring
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn columns(&self) -> &[Chain] {
        &self.columns
    }

    pub fn shifts(&self) -> &[PeriodPair] {
        &self.shifts
    }

    fn shifted_pair(&self, key: &Key) -> PeriodPair {
        &self.ring.system.pair_unchecked(&key.1) + &self.shifts[key.0]
    }

    /// Valuation of a chain in the given order, including row shifts.
    pub fn valuation(&self, chain: &Chain, order: &Order) -> Rank2Value {
        self.leading(&flat_of(chain), order)
            .map_or(Rank2Value::Infinite, |(p, _)| Rank2Value::Finite(p))
    }

    /// `u = Σ_j coeffs_j·u_j`.
    pub fn apply(&self, coeffs: &Chain) -> Result<Chain> {
        let mut out = Chain::zero(&self.ring);
        for (j, c) in coeffs.coeffs() {
            let col = self.columns.get(*j).ok_or(Error::DimensionMismatch {
                expected: self.columns.len(),
                found: *j + 1,
            })?;
            out = out.add(&col.scale(c)?)?;
        }
        Ok(out)
    }

    fn leading(&self, v: &Flat, order: &Order) -> Option<(PeriodPair, Vec<Key>)> {
        let mut best: Option<(PeriodPair, Vec<Key>)> = None;
        for key in v.keys() {
            let p = self.shifted_pair(key);
            match &mut best {
                None => best = Some((p, vec![key.clone()])),
                Some((q, keys)) => match order.cmp_pairs(&p, q) {
                    Ordering::Less => best = Some((p, vec![key.clone()])),
                    Ordering::Equal => keys.push(key.clone()),
                    Ordering::Greater => {}
                },
            }
        }
        best
    }
}

/// `−(η_r(0), η_r(1))` for every generator.
pub fn generator_shifts(cx: &ComplexData) -> Vec<PeriodPair> {
    cx.generators()
        .iter()
        .map(|g| PeriodPair::new(-g.eta(&Rational::zero()), -g.eta(&Rational::one())))
        .collect()
}

/// Multiplies each nonzero column by `T^{−A}` for its lex-leading exponent `A`, so that `ν̄ = (0, 0)`.
///
/// Only meaningful without row shifts.
pub fn normalize_columns(op: &Operator) -> Operator {
    let mut out = op.clone();
    for col in &mut out.columns {
        let flat = flat_of(col);
        if let Some((_, keys)) = op.leading(&flat, &Order::Lex) {
            let a = &keys[0].1;
            let mut shifted = Flat::new();
            axpy(&op.ring, &mut shifted, &Rational::one(), &-a, &flat);
            *col = chain_of(&op.ring, &shifted);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum OutcomeKind {
    FixedPoint,
    /// `ν̄₁ → ∞` while `ν̄₀` stays at `first`.
    DivergesSecond {
        #[serde(serialize_with = "serialize_rational")]
        first: Rational,
    },
    /// `ν̄₀ → ∞` while `ν̄₁` stays at `second`.
    DivergesFirst {
        #[serde(serialize_with = "serialize_rational")]
        second: Rational,
    },
    DivergesBoth,
    /// One coordinate stays beyond the cutoff for a whole window while the other
    /// keeps moving below it, e.g. `ν̄₀` under the `Omega1` truncation.
    Unsettled,
}

impl fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutcomeKind::FixedPoint => f.write_str("fixed point"),
            OutcomeKind::DivergesSecond { first } => {
                write!(
                    f,
                    "second coordinate diverges with first fixed at {}",
                    format_rational(first)
                )
            }
            OutcomeKind::DivergesFirst { second } => {
                write!(
                    f,
                    "first coordinate diverges with second fixed at {}",
                    format_rational(second)
                )
            }
            OutcomeKind::DivergesBoth => f.write_str("both coordinates diverge"),
            OutcomeKind::Unsettled => {
                f.write_str("one coordinate leaves the window while the other never settles")
            }
        }
    }
}

/// Result of iterating φ on `v`.
#[derive(Clone, Debug)]
pub struct ReductionOutcome {
    pub kind: OutcomeKind,
    /// `u = Σ w^(i)`.
    pub approximant: Chain,
    /// Coefficients `c_j` with `u = Σ c_j·u_j`.
    pub preimage: Chain,
    /// `v − u`: the fixed point, or the last iterate on divergence.
    pub residual: Chain,
    /// Self-distance sequence `w^(i) = v^(i−1) − v^(i)`.
    pub increments: Vec<Chain>,
    /// `ν̄(v^(0)), ν̄(v^(1)), …`
    pub trace: Vec<Rank2Value>,
    /// The preimage before truncation, keyed by `(column, exponent)`.
    steps: Flat,
}

impl ReductionOutcome {
    pub fn is_fixed_point(&self) -> bool {
        self.kind == OutcomeKind::FixedPoint
    }
}

/// Tracks the first parameter after `from` (and before `to`) at which a comparison made
/// during a t-weighted run could change its outcome.
#[derive(Clone, Debug)]
pub(crate) struct Events {
    pub from: Rational,
    pub to: Rational,
    pub next: Option<Rational>,
}

impl Events {
    pub(crate) fn new(from: Rational, to: Rational) -> Events {
        Events {
            from,
            to,
            next: None,
        }
    }

    fn record(&mut self, p: &PeriodPair, q: &PeriodPair) {
        let d0 = &q.g0 - &p.g0;
        let den = &d0 - (&q.g1 - &p.g1);
        if den.is_zero() {
            return;
        }
        let tc = d0 / den;
        if tc > self.from && tc < self.to && self.next.as_ref().is_none_or(|n| &tc < n) {
            self.next = Some(tc);
        }
    }
}

struct Reducer<'a> {
    op: &'a Operator,
    order: &'a Order,
    columns: Vec<Flat>,
    leads: Vec<Option<(PeriodPair, Vec<Key>)>>,
    events: Option<&'a RefCell<Events>>,
}

impl<'a> Reducer<'a> {
    fn new(op: &'a Operator, order: &'a Order, columns: Vec<Flat>) -> Reducer<'a> {
        Reducer::tracked(op, order, columns, None)
    }

    fn tracked(
        op: &'a Operator,
        order: &'a Order,
        columns: Vec<Flat>,
        events: Option<&'a RefCell<Events>>,
    ) -> Reducer<'a> {
        let mut r = Reducer {
            op,
            order,
            columns,
            leads: Vec::new(),
            events,
        };
        r.leads = r.columns.iter().map(|c| r.leading(c)).collect();
        r
    }

    /// Reducer over exact combinations of the operator's columns, kept untruncated.
    /// Shifting a truncated column by `T^g` with negative periods would resurrect
    /// dropped terms below its lead.
    fn over_expansions(
        op: &'a Operator,
        order: &'a Order,
        expansions: &[Flat],
        events: Option<&'a RefCell<Events>>,
    ) -> Reducer<'a> {
        let originals: Vec<Flat> = op.columns.iter().map(flat_of).collect();
        let columns = expansions
            .iter()
            .map(|e| expand(op.ring.field, e, &originals))
            .collect();
        Reducer::tracked(op, order, columns, events)
    }

    /// `target += c·T^g·column_j`.
    fn add_column(&self, target: &mut Flat, c: &Rational, g: &Exponent, j: usize) {
        axpy(&self.op.ring, target, c, g, &self.columns[j]);
    }

    fn leading(&self, v: &Flat) -> Option<(PeriodPair, Vec<Key>)> {
        let mut best: Option<(PeriodPair, Vec<Key>)> = None;
        for key in v.keys() {
            let p = self.op.shifted_pair(key);
            match &mut best {
                None => best = Some((p, vec![key.clone()])),
                Some((q, keys)) => {
                    if let Some(ev) = self.events {
                        ev.borrow_mut().record(&p, q);
                    }
                    match self.order.cmp_pairs(&p, q) {
                        Ordering::Less => best = Some((p, vec![key.clone()])),
                        Ordering::Equal => keys.push(key.clone()),
                        Ordering::Greater => {}
                    }
                }
            }
        }
        best
    }

    /// Solves `L(v) = Σ c·T^g·L(u_j)` at the leading level; `None` if `L(v)` is not in the span.
    fn phi_step(
        &self,
        v: &Flat,
        level: &PeriodPair,
        keys: &[Key],
    ) -> Option<Vec<(usize, Exponent, Rational)>> {
        let ring = &self.op.ring;
        let mut support: BTreeSet<Key> = keys.iter().cloned().collect();
        // Breadth first from v's keys. When periods have a kernel the closure can
        // run along it forever; a shift is only admitted if all of its leading keys
        // fit, so whatever gets solved cancels the level exactly.
        let mut queue: VecDeque<Key> = keys.iter().cloned().collect();
        let mut cands: BTreeSet<(usize, Exponent)> = BTreeSet::new();
        while let Some((r, a)) = queue.pop_front() {
            for (j, lead) in self.leads.iter().enumerate() {
                let Some((_, lk)) = lead else { continue };
                for (_, a2) in lk.iter().filter(|(r2, _)| *r2 == r) {
                    let g = &a - a2;
                    if cands.contains(&(j, g.clone())) {
                        continue;
                    }
                    let fresh: Vec<Key> = lk
                        .iter()
                        .map(|(r3, a3)| (*r3, a3 + &g))
                        .filter(|k| !support.contains(k))
                        .collect();
                    if support.len() + fresh.len() > MAX_LEVEL_SUPPORT {
                        continue;
                    }
                    debug_assert!(fresh.iter().all(|(_, b)| ring.keeps(b)));
                    cands.insert((j, g));
                    for k in fresh {
                        support.insert(k.clone());
                        queue.push_back(k);
                    }
                }
            }
        }
        if cands.is_empty() {
            return None;
        }
        let rows: Vec<&Key> = support.iter().collect();
        let row_index: BTreeMap<&Key, usize> =
            rows.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        let cands: Vec<(usize, Exponent)> = cands.into_iter().collect();
        let mut a = vec![vec![Rational::zero(); cands.len()]; rows.len()];
        for (ci, (j, g)) in cands.iter().enumerate() {
            let (_, lk) = self.leads[*j].as_ref().unwrap();
            for k in lk {
                let b = (k.0, &k.1 + g);
                if let Some(&ri) = row_index.get(&b) {
                    a[ri][ci] = self.columns[*j][k].clone();
                }
            }
        }
        let b: Vec<Rational> = rows
            .iter()
            .map(|k| v.get(*k).cloned().unwrap_or_else(Rational::zero))
            .collect();
        debug_assert!(rows
            .iter()
            .all(|k| !v.contains_key(*k) || &self.op.shifted_pair(k) == level));
        let x = solve(ring.field, a, b)?;
        Some(
            cands
                .into_iter()
                .zip(x)
                .filter(|(_, c)| !c.is_zero())
                .map(|((j, g), c)| (j, g, c))
                .collect(),
        )
    }

    fn run(&self, v0: &Flat, cutoff: &Rational) -> Result<ReductionOutcome> {
        let ring = &self.op.ring;
        let f = ring.field;
        let mut v = v0.clone();
        let mut u = Flat::new();
        let mut steps = Flat::new();
        let mut increments = Vec::new();
        let mut trace = Vec::new();
        let init = self.leading(&v);
        let (bound0, bound1) = match &init {
            Some((p, _)) => (cutoff.max(&p.g0).clone(), cutoff.max(&p.g1).clone()),
            None => (cutoff.clone(), cutoff.clone()),
        };
        trace.push(
            init.as_ref()
                .map_or(Rank2Value::Infinite, |(p, _)| Rank2Value::Finite(p.clone())),
        );
        let mut lead = init;
        let kind = loop {
            let Some((level, keys)) = &lead else {
                break OutcomeKind::FixedPoint;
            };
            let Some(sol) = self.phi_step(&v, level, keys) else {
                break OutcomeKind::FixedPoint;
            };
            if increments.len() >= MAX_STEPS {
                return Err(Error::StepLimit(MAX_STEPS));
            }
            let mut w = Flat::new();
            for (j, g, c) in &sol {
                self.add_column(&mut w, c, g, *j);
                let unit: Flat = [((*j, Exponent::zero(ring.rank())), Rational::one())].into();
                shift_add(f, &mut steps, c, g, &unit);
            }
            axpy(
                ring,
                &mut v,
                &f.neg(&Rational::one()),
                &Exponent::zero(ring.rank()),
                &w,
            );
            axpy(
                ring,
                &mut u,
                &Rational::one(),
                &Exponent::zero(ring.rank()),
                &w,
            );
            increments.push(chain_of(ring, &w));
            lead = self.leading(&v);
            let val = lead
                .as_ref()
                .map_or(Rank2Value::Infinite, |(p, _)| Rank2Value::Finite(p.clone()));
            trace.push(val);
            if let Some((p, _)) = &lead {
                let e0 = p.g0 > bound0;
                let e1 = p.g1 > bound1;
                let tail = &trace[trace.len().saturating_sub(DIVERGENCE_WINDOW)..];
                let settled = |coord: fn(&PeriodPair) -> &Rational| {
                    tail.len() == DIVERGENCE_WINDOW
                        && tail.iter().all(|x| x.finite().map(coord) == Some(coord(p)))
                };
                if e0 && e1 {
                    break OutcomeKind::DivergesBoth;
                }
                if e1 && settled(|q| &q.g0) {
                    break OutcomeKind::DivergesSecond {
                        first: p.g0.clone(),
                    };
                }
                if e0 && settled(|q| &q.g1) {
                    break OutcomeKind::DivergesFirst {
                        second: p.g1.clone(),
                    };
                }
                let beyond = |x: &Rank2Value| {
                    x.finite()
                        .is_some_and(|q| (q.g0 > bound0) == e0 && (q.g1 > bound1) == e1)
                };
                if (e0 || e1) && tail.len() == DIVERGENCE_WINDOW && tail.iter().all(beyond) {
                    break OutcomeKind::Unsettled;
                }
            }
        };
        let preimage = chain_of(ring, &steps);
        Ok(ReductionOutcome {
            kind,
            approximant: chain_of(ring, &u),
            preimage,
            residual: chain_of(ring, &v),
            increments,
            trace,
            steps,
        })
    }
}

/// Gaussian elimination over the field, pivoting on the lowest column index. Free unknowns are zero.
fn solve(field: Field, mut a: Vec<Vec<Rational>>, mut b: Vec<Rational>) -> Option<Vec<Rational>> {
    let n = a.first().map_or(0, Vec::len);
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..n {
        let Some(p) = (row..a.len()).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(row, p);
        b.swap(row, p);
        let inv = field.inv(&a[row][col]);
        for x in &mut a[row][col..] {
            *x = field.mul(x, &inv);
        }
        b[row] = field.mul(&b[row], &inv);
        let pivot = a[row].clone();
        for r in 0..a.len() {
            if r != row && !a[r][col].is_zero() {
                let factor = a[r][col].clone();
                for (x, p) in a[r][col..].iter_mut().zip(&pivot[col..]) {
                    *x = field.sub(x, &field.mul(&factor, p));
                }
                let d = field.mul(&factor, &b[row]);
                b[r] = field.sub(&b[r], &d);
            }
        }
        pivots.push(col);
        row += 1;
    }
    if b[row..].iter().any(|x| !x.is_zero()) {
        return None;
    }
    let mut x = vec![Rational::zero(); n];
    for (r, col) in pivots.into_iter().enumerate() {
        x[col] = b[r].clone();
    }
    Some(x)
}

fn check_cutoff(cutoff: &Rational) -> Result<()> {
    if cutoff.is_positive() {
        Ok(())
    } else {
        Err(Error::NonPositiveCutoff)
    }
}

/// Iterates φ on `v` until a fixed point or a classified divergence.
///
/// Without row shifts, every nonzero column must have `ν̄ = (0, 0)` in `order`.
pub fn fixed_point(
    op: &Operator,
    v: &Chain,
    order: &Order,
    cutoff: &Rational,
) -> Result<ReductionOutcome> {
    check_cutoff(cutoff)?;
    if !same_ring(&op.ring, v.ring()) {
        return Err(Error::RingMismatch);
    }
    let zero = Rank2Value::Finite(PeriodPair::zero());
    if !op.shifted {
        for (j, c) in op.columns.iter().enumerate() {
            if !c.is_zero() && op.valuation(c, order) != zero {
                return Err(Error::NotNormalized { column: j });
            }
        }
    }
    let cols = op.columns.iter().map(flat_of).collect();
    Reducer::new(op, order, cols).run(&flat_of(v), cutoff)
}

#[derive(Clone, Debug)]
pub struct Approximation {
    /// The best approximant `u ∈ Im(T)`.
    pub u: Chain,
    /// `c` with `u = Σ c_j·u_j` over the operator's columns.
    pub preimage: Chain,
    /// `w − u`.
    pub residual: Chain,
    /// `ν̄(w − u)` in the chosen order.
    pub achieved: Rank2Value,
}

/// Columns reduced against each other so that leading parts never cancel; zero residuals are dropped.
struct Orthogonal {
    columns: Vec<Flat>,
    /// Each reduced column over the original columns, untruncated.
    expansions: Vec<Flat>,
}

/// `Σ c·T^g·expansion_j` over the `(j, g) → c` steps of a reduction.
fn expand(field: Field, steps: &Flat, expansions: &[Flat]) -> Flat {
    let mut out = Flat::new();
    for ((j, g), c) in steps {
        shift_add(field, &mut out, c, g, &expansions[*j]);
    }
    out
}

fn orthogonalize(
    op: &Operator,
    order: &Order,
    cutoff: &Rational,
    events: Option<&RefCell<Events>>,
) -> Result<Orthogonal> {
    let f = op.ring.field;
    let rank = op.ring.rank();
    let mut out = Orthogonal {
        columns: Vec::new(),
        expansions: Vec::new(),
    };
    for (j, col) in op.columns.iter().enumerate() {
        let reducer = Reducer::over_expansions(op, order, &out.expansions, events);
        let r = reducer.run(&flat_of(col), cutoff)?;
        if !r.is_fixed_point() {
            return Err(Error::Divergence(Box::new(r)));
        }
        if r.residual.is_zero() {
            continue;
        }
        // col_j − Σ c·T^g·(reduced column) as a combination of the original columns.
        let zero = Exponent::zero(rank);
        let mut e: Flat = [((j, zero.clone()), Rational::one())].into();
        shift_add(
            f,
            &mut e,
            &f.neg(&Rational::one()),
            &zero,
            &expand(f, &r.steps, &out.expansions),
        );
        out.columns.push(flat_of(&r.residual));
        out.expansions.push(e);
    }
    Ok(out)
}

/// Finds `u ∈ Im(T)` maximizing `ν̄(w − u)` in `order` (up to truncation).
pub fn best_approximation(
    op: &Operator,
    w: &Chain,
    order: &Order,
    cutoff: &Rational,
) -> Result<Approximation> {
    best_approximation_tracked(op, w, order, cutoff, None)
}

pub(crate) fn best_approximation_tracked(
    op: &Operator,
    w: &Chain,
    order: &Order,
    cutoff: &Rational,
    events: Option<&RefCell<Events>>,
) -> Result<Approximation> {
    check_cutoff(cutoff)?;
    if !same_ring(&op.ring, w.ring()) {
        return Err(Error::RingMismatch);
    }
    let ring = &op.ring;
    let orth = orthogonalize(op, order, cutoff, events)?;
    let reducer = Reducer::over_expansions(op, order, &orth.expansions, events);
    let r = reducer.run(&flat_of(w), cutoff)?;
    if !r.is_fixed_point() {
        return Err(Error::Divergence(Box::new(r)));
    }
    let preimage = chain_of(ring, &expand(ring.field, &r.steps, &orth.expansions));
    let achieved = reducer
        .leading(&flat_of(&r.residual))
        .map_or(Rank2Value::Infinite, |(p, _)| Rank2Value::Finite(p));
    Ok(Approximation {
        u: r.approximant,
        preimage,
        residual: r.residual,
        achieved,
    })
}

/// A sequence in `Im(T)` whose valuation diverges in one coordinate only.
#[derive(Clone, Debug)]
pub struct DivergenceWitness {
    pub probe: Chain,
    pub kind: OutcomeKind,
    /// Self-distance terms `w^(i) ∈ Im(T)`.
    pub sequence: Vec<Chain>,
    /// `ν̄(w^(i))`.
    pub valuations: Vec<Rank2Value>,
}

impl fmt::Display for DivergenceWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "divergence witness ({})", self.kind)?;
        for (i, v) in self.valuations.iter().enumerate() {
            writeln!(f, "  w^({}) valuation {}", i + 1, v)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum DivergenceCheck {
    Pass { probes: usize, inconclusive: usize },
    Witness(Box<DivergenceWitness>),
}

impl DivergenceCheck {
    pub fn passed(&self) -> bool {
        matches!(self, DivergenceCheck::Pass { .. })
    }
}

const RANDOM_PROBES: usize = 8;

/// Probes `Im(T)` for one-sided divergence under the lexicographic order.
pub fn floer_divergence_check(
    op: &Operator,
    cutoff: &Rational,
    seed: u64,
) -> Result<DivergenceCheck> {
    check_cutoff(cutoff)?;
    let ring = op.ring.clone();
    let norm = normalize_columns(op);
    let cols: Vec<Flat> = norm
        .columns
        .iter()
        .map(flat_of)
        .filter(|c| !c.is_empty())
        .collect();
    let mut probes: Vec<Flat> = Vec::new();
    for c in &cols {
        for (k, x) in c {
            probes.push([(k.clone(), x.clone())].into());
        }
        probes.push(c.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if !cols.is_empty() {
        for _ in 0..RANDOM_PROBES {
            let mut v = Flat::new();
            for c in &cols {
                if rng.gen_bool(0.5) {
                    let g = Exponent((0..ring.rank()).map(|_| rng.gen_range(0..=1)).collect());
                    let coef = ring.field.from_i64(rng.gen_range(1..=3));
                    axpy(&ring, &mut v, &coef, &g, c);
                }
            }
            if !v.is_empty() {
                probes.push(v);
            }
        }
    }
    let reducer = Reducer::new(&norm, &Order::Lex, cols);
    let mut inconclusive = 0;
    for p in &probes {
        let r = match reducer.run(p, cutoff) {
            Ok(r) => r,
            Err(Error::StepLimit(_)) => {
                inconclusive += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        if r.kind == OutcomeKind::Unsettled {
            inconclusive += 1;
            continue;
        }
        if matches!(
            r.kind,
            OutcomeKind::DivergesSecond { .. } | OutcomeKind::DivergesFirst { .. }
        ) {
            let valuations = r
                .increments
                .iter()
                .map(|w| norm.valuation(w, &Order::Lex))
                .collect();
            return Ok(DivergenceCheck::Witness(Box::new(DivergenceWitness {
                probe: chain_of(&ring, p),
                kind: r.kind,
                sequence: r.increments,
                valuations,
            })));
        }
    }
    Ok(DivergenceCheck::Pass {
        probes: probes.len(),
        inconclusive,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Bar {
    pub degree: i64,
    #[serde(serialize_with = "serialize_rational")]
    pub birth: Rational,
    pub death: Extended,
}

impl Bar {
    pub fn length(&self) -> Extended {
        match &self.death {
            Extended::Finite(d) => Extended::Finite(d - &self.birth),
            other => other.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Barcode {
    pub bars: Vec<Bar>,
}

impl Barcode {
    /// Sorts bars by degree, birth, death.
    pub fn new(mut bars: Vec<Bar>) -> Barcode {
        bars.sort();
        Barcode { bars }
    }

    pub fn finite(&self) -> impl Iterator<Item = &Bar> {
        self.bars.iter().filter(|b| b.death.is_finite())
    }

    pub fn infinite(&self) -> impl Iterator<Item = &Bar> {
        self.bars.iter().filter(|b| !b.death.is_finite())
    }

    /// `degree,birth,death` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("degree,birth,death\n");
        for b in &self.bars {
            let _ = writeln!(
                out,
                "{},{},{}",
                b.degree,
                format_rational(&b.birth),
                b.death
            );
        }
        out
    }
}

/// Barcode of the `ℓ_t`-filtered complex `(CF, ∂_t)`.
pub fn persistence_barcode(cx: &ComplexData, t: &Rational) -> Result<Barcode> {
    check_t(t)?;
    if !cx.validate(std::slice::from_ref(t))?.ok() {
        return Err(Error::Unvalidated(t.clone()));
    }
    let ring = cx.ring().clone();
    let d = cx.boundary().get(t)?;
    let gens = cx.generators();
    let etas: Vec<Rational> = gens.iter().map(|g| g.eta(t)).collect();
    let sys = &ring.system;
    let order = Order::Weighted(t.clone());
    let shifts = generator_shifts(cx);
    // Larger shifted pair ⇒ lower filtration; the low of a column is its order-minimal key.
    let key_cmp = |a: &Key, b: &Key| {
        let pa = &sys.pair_unchecked(&a.1) + &shifts[a.0];
        let pb = &sys.pair_unchecked(&b.1) + &shifts[b.0];
        order
            .cmp_pairs(&pa, &pb)
            .then(a.0.cmp(&b.0))
            .then_with(|| a.1.cmp(&b.1))
    };
    let low = |c: &Flat| c.keys().min_by(|a, b| key_cmp(a, b)).cloned();
    let level = |j: usize, g: &Exponent| &etas[j] - sys.pair_unchecked(g).weight(t);

    let mut cols: Vec<Flat> = (0..gens.len()).map(|j| flat_of(&d.column(j))).collect();
    let mut owner: BTreeMap<usize, (usize, Exponent)> = BTreeMap::new();
    let mut order_idx: Vec<usize> = (0..gens.len()).collect();
    order_idx.sort_by(|a, b| etas[*a].cmp(&etas[*b]).then(a.cmp(b)));
    let f = ring.field;
    let mut steps = 0usize;
    for &start in &order_idx {
        let mut stack = vec![start];
        while let Some(j) = stack.pop() {
            loop {
                steps += 1;
                if steps > MAX_STEPS * 10 {
                    return Err(Error::StepLimit(MAX_STEPS * 10));
                }
                let Some((x, a)) = low(&cols[j]) else { break };
                let Some((i, ai)) = owner.get(&x).cloned() else {
                    owner.insert(x, (j, a));
                    break;
                };
                if i == j {
                    break;
                }
                let g = &a - &ai;
                let c = f.mul(
                    &cols[j][&(x, a.clone())],
                    &f.inv(&cols[i][&(x, ai.clone())]),
                );
                if level(i, &g) <= etas[j] {
                    let src = cols[i].clone();
                    axpy(&ring, &mut cols[j], &f.neg(&c), &g, &src);
                } else {
                    // T^g·y_i is born after y_j: y_j takes the pivot and y_i is reduced by T^{−g}·col_j.
                    let src = cols[j].clone();
                    axpy(&ring, &mut cols[i], &f.neg(&f.inv(&c)), &-&g, &src);
                    owner.insert(x, (j, a));
                    stack.push(i);
                    break;
                }
            }
        }
    }
    let mut bars = Vec::new();
    let pivots: BTreeSet<usize> = owner.keys().copied().collect();
    for (x, (j, a)) in &owner {
        bars.push(Bar {
            degree: gens[*x].degree,
            birth: level(*x, a),
            death: Extended::Finite(etas[*j].clone()),
        });
    }
    for (z, g) in gens.iter().enumerate() {
        if !pivots.contains(&z) && cols[z].is_empty() {
            bars.push(Bar {
                degree: g.degree,
                birth: etas[z].clone(),
                death: Extended::PosInf,
            });
        }
    }
    Ok(Barcode::new(bars))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{BoundaryFamily, CappedGenerator};
    use crate::exponents::PeriodSystem;
    use crate::novikov::RingMode;
    use crate::rational::qi;

    fn ring(field: Field) -> Arc<Ring> {
        let sys = PeriodSystem::new(vec![qi(1), qi(0)], vec![qi(0), qi(1)]).unwrap();
        Ring::new(sys, field, RingMode::Interval, qi(10)).unwrap()
    }

    fn mono(r: &Arc<Ring>, a: Vec<i64>, c: i64) -> NovikovElement {
        NovikovElement::monomial(r, Exponent(a), qi(c)).unwrap()
    }

    fn example(r: &Arc<Ring>, b: Vec<i64>) -> Operator {
        let col = mono(r, vec![0, 0], 1).sub(&mono(r, b, 1)).unwrap();
        Operator::new(r, 1, vec![Chain::single(0, col)]).unwrap()
    }

    #[test]
    fn zero_operator_is_fixed() {
        let r = ring(Field::default());
        let op = Operator::new(&r, 1, vec![]).unwrap();
        let v = Chain::single(0, mono(&r, vec![0, 1], 1));
        let out = fixed_point(&op, &v, &Order::Lex, &qi(10)).unwrap();
        assert!(out.is_fixed_point());
        assert!(out.approximant.is_zero());
        assert_eq!(out.trace.len(), 1);
    }

    #[test]
    fn pathological_operator_diverges_in_second_coordinate() {
        let r = ring(Field::default());
        let op = example(&r, vec![0, 1]);
        let v = Chain::single(0, mono(&r, vec![0, 1], 1));
        let out = fixed_point(&op, &v, &Order::Lex, &qi(10)).unwrap();
        assert_eq!(out.kind, OutcomeKind::DivergesSecond { first: qi(0) });
        let expect: Vec<Rank2Value> = (1..=11)
            .map(|j| Rank2Value::Finite(PeriodPair::new(qi(0), qi(j))))
            .collect();
        assert_eq!(out.trace, expect);
        assert!(matches!(
            best_approximation(&op, &v, &Order::Lex, &qi(10)),
            Err(Error::Divergence(_))
        ));
    }

    #[test]
    fn positive_geometric_series_collapses() {
        let r = ring(Field::default());
        let op = example(&r, vec![1, 1]);
        let v = Chain::single(0, mono(&r, vec![1, 1], 1));
        let out = fixed_point(&op, &v, &Order::Lex, &qi(10)).unwrap();
        assert!(out.is_fixed_point());
        assert_eq!(out.approximant, v);
        assert!(out.residual.is_zero());
        assert_eq!(op.apply(&out.preimage).unwrap(), v);
    }

    #[test]
    fn non_normalized_columns_rejected() {
        let r = ring(Field::default());
        let col = Chain::single(0, mono(&r, vec![1, 0], 1));
        let op = Operator::new(&r, 1, vec![col]).unwrap();
        let v = Chain::basis(&r, 0);
        assert!(matches!(
            fixed_point(&op, &v, &Order::Lex, &qi(5)),
            Err(Error::NotNormalized { column: 0 })
        ));
        assert!(fixed_point(&normalize_columns(&op), &v, &Order::Lex, &qi(5)).is_ok());
        assert!(matches!(
            fixed_point(&op, &v, &Order::Lex, &qi(0)),
            Err(Error::NonPositiveCutoff)
        ));
    }

    #[test]
    fn best_approximation_basics() {
        let r = ring(Field::Rationals);
        let op = example(&r, vec![1, 1]);
        let w = Chain::single(
            0,
            mono(&r, vec![0, 0], 1)
                .sub(&mono(&r, vec![1, 1], 1))
                .unwrap(),
        );
        let a = best_approximation(&op, &w, &Order::Lex, &qi(10)).unwrap();
        assert_eq!(a.u, w);
        assert_eq!(a.achieved, Rank2Value::Infinite);

        let op = Operator::new(&r, 2, vec![Chain::basis(&r, 0)]).unwrap();
        let w = Chain::single(1, mono(&r, vec![0, 2], 3));
        let a = best_approximation(&op, &w, &Order::Lex, &qi(10)).unwrap();
        assert!(a.u.is_zero());
        assert_eq!(a.achieved, w.coeffs()[&1].valuation());
    }

    #[test]
    fn dependent_columns_are_orthogonalized() {
        // u1 = e0 + e1, u2 = e0: the greedy step alone would stop at e1's level.
        let r = ring(Field::Rationals);
        let cols = vec![
            Chain::basis(&r, 0)
                .add(&Chain::single(1, mono(&r, vec![0, 1], 1)))
                .unwrap(),
            Chain::basis(&r, 0),
        ];
        let op = Operator::new(&r, 2, cols).unwrap();
        let w = Chain::single(1, mono(&r, vec![0, 1], 1));
        let a = best_approximation(&op, &w, &Order::Lex, &qi(10)).unwrap();
        assert_eq!(a.achieved, Rank2Value::Infinite);
        assert_eq!(op.apply(&a.preimage).unwrap(), w);
    }

    fn poly(r: &Arc<Ring>, terms: &[[i64; 2]]) -> NovikovElement {
        NovikovElement::from_terms(r, terms.iter().map(|a| (Exponent(a.to_vec()), qi(1)))).unwrap()
    }

    #[test]
    fn kernel_levels_combine_columns() {
        // ω₀ = ω₁ = (1, 1): one level holds a whole diagonal of exponents.
        // w = x·y⁻¹·u2 + (x⁻¹y⁻¹ + x·y⁻¹)·u1 needs both columns in one φ-step.
        let sys = PeriodSystem::new(vec![qi(1), qi(1)], vec![qi(1), qi(1)]).unwrap();
        let r = Ring::new(sys, Field::Prime(2), RingMode::Interval, qi(5)).unwrap();
        let u1 = Chain::single(1, poly(&r, &[[1, 1]]));
        let u2 =
            Chain::from_coeffs(&r, [(0, poly(&r, &[[0, 2]])), (1, poly(&r, &[[1, 1]]))]).unwrap();
        let op = Operator::new(&r, 2, vec![u1, u2]).unwrap();
        let w =
            Chain::from_coeffs(&r, [(0, poly(&r, &[[1, 1]])), (1, poly(&r, &[[0, 0]]))]).unwrap();
        let a = best_approximation(&op, &w, &Order::Lex, &qi(5)).unwrap();
        assert_eq!(a.achieved, Rank2Value::Infinite);
        assert_eq!(op.apply(&a.preimage).unwrap(), w);
    }

    #[test]
    fn lex_under_second_truncation_leaves_the_window() {
        // Keeping 2a + b ≤ 5 leaves infinitely many levels with growing ν̄₀.
        let sys = PeriodSystem::new(vec![qi(1), qi(2)], vec![qi(2), qi(1)]).unwrap();
        let r = Ring::new(sys, Field::Prime(2), RingMode::Omega1, qi(5)).unwrap();
        let cols = [
            &[[2, 0], [0, 2]][..],
            &[[1, 0], [0, 1], [1, 2]],
            &[[0, 1], [0, 3]],
        ]
        .iter()
        .map(|t| Chain::single(0, poly(&r, t)))
        .collect();
        let op = Operator::new(&r, 1, cols).unwrap();
        let w = Chain::single(0, poly(&r, &[[2, 0], [0, 3]]));
        match best_approximation(&op, &w, &Order::Lex, &qi(5)) {
            Err(Error::Divergence(out)) => assert_eq!(out.kind, OutcomeKind::Unsettled),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn divergence_check_cases() {
        let r = ring(Field::default());
        let check = floer_divergence_check(&example(&r, vec![0, 1]), &qi(10), 0).unwrap();
        let DivergenceCheck::Witness(w) = check else {
            panic!("expected a witness")
        };
        assert!(w.valuations.len() >= DIVERGENCE_WINDOW);
        assert!(w
            .valuations
            .iter()
            .all(|v| v.first() == Extended::Finite(qi(0))));
        assert!(
            floer_divergence_check(&Operator::new(&r, 1, vec![]).unwrap(), &qi(10), 0)
                .unwrap()
                .passed()
        );
        assert!(floer_divergence_check(&example(&r, vec![1, 1]), &qi(10), 0)
            .unwrap()
            .passed());
    }

    fn complex(
        r: &Arc<Ring>,
        gens: Vec<CappedGenerator>,
        entries: Vec<((usize, usize), NovikovElement)>,
    ) -> ComplexData {
        let n = gens.len();
        let mut b = BoundaryFamily::new();
        b.insert(qi(0), Matrix::from_entries(r, n, n, entries).unwrap())
            .unwrap();
        ComplexData::new(r.clone(), gens, b, vec![]).unwrap()
    }

    #[test]
    fn barcodes() {
        let r = ring(Field::default());
        let zero = complex(
            &r,
            vec![
                CappedGenerator::new("a", 0, qi(1), qi(0)),
                CappedGenerator::new("b", 1, qi(4), qi(0)),
            ],
            vec![],
        );
        let bc = persistence_barcode(&zero, &qi(0)).unwrap();
        assert_eq!(bc.infinite().count(), 2);
        assert_eq!(bc.bars[0].birth, qi(1));

        let pair = complex(
            &r,
            vec![
                CappedGenerator::new("x", 0, qi(1), qi(0)),
                CappedGenerator::new("y", 1, qi(3), qi(0)),
            ],
            vec![((0, 1), mono(&r, vec![0, 0], 1))],
        );
        let bc = persistence_barcode(&pair, &qi(0)).unwrap();
        assert_eq!(
            bc.bars,
            vec![Bar {
                degree: 0,
                birth: qi(1),
                death: Extended::Finite(qi(3))
            }]
        );
        assert_eq!(bc.to_csv(), "degree,birth,death\n0,1,3\n");

        let sum = complex(
            &r,
            vec![
                CappedGenerator::new("x", 0, qi(1), qi(0)),
                CappedGenerator::new("y", 1, qi(3), qi(0)),
                CappedGenerator::new("a", 0, qi(1), qi(0)),
                CappedGenerator::new("b", 1, qi(4), qi(0)),
            ],
            vec![((0, 1), mono(&r, vec![0, 0], 1))],
        );
        assert_eq!(persistence_barcode(&sum, &qi(0)).unwrap().bars.len(), 3);
    }

    #[test]
    fn barcode_swaps_pivots() {
        // y1 and y2 both hit x; y2 is born later but T^g y1 is born even later.
        let r = ring(Field::default());
        let cx = complex(
            &r,
            vec![
                CappedGenerator::new("x", 0, qi(0), qi(0)),
                CappedGenerator::new("y1", 1, qi(2), qi(0)),
                CappedGenerator::new("y2", 1, qi(3), qi(0)),
            ],
            vec![
                ((0, 1), mono(&r, vec![0, 0], 1)),
                ((0, 2), mono(&r, vec![-2, -2], 1)),
            ],
        );
        let bc = persistence_barcode(&cx, &qi(0)).unwrap();
        let finite: Vec<_> = bc.finite().collect();
        assert_eq!(finite.len(), 1);
        assert_eq!(finite[0].birth, qi(2));
        assert_eq!(finite[0].death, Extended::Finite(qi(3)));
        assert_eq!(bc.infinite().count(), 1);
        assert_eq!(bc.infinite().next().unwrap().birth, qi(2));
    }
}
