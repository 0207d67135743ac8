//! Families of filtered chain complexes over the interval Novikov ring.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::envelope::{filtration_curve, Affine, PiecewiseAffine, PointCloud};
use crate::error::{Error, Result};
use crate::exponents::check_t;
use crate::novikov::{same_ring, NovikovElement, Ring, RingMode};
use crate::rational::{format_rational, serialize_rational, Extended, Rational};

/// A basis element `[x, w]` with grading and affine action `η(t) = action0 + t·slope`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct CappedGenerator {
    pub name: String,
    pub degree: i64,
    #[serde(serialize_with = "serialize_rational")]
    pub action0: Rational,
    #[serde(serialize_with = "serialize_rational")]
    pub slope: Rational,
}

impl CappedGenerator {
    pub fn new(
        name: impl Into<String>,
        degree: i64,
        action0: Rational,
        slope: Rational,
    ) -> CappedGenerator {
        CappedGenerator {
            name: name.into(),
            degree,
            action0,
            slope,
        }
    }

    pub fn eta(&self, t: &Rational) -> Rational {
        &self.action0 + t * &self.slope
    }

    pub fn eta_affine(&self) -> Affine {
        Affine::new(self.action0.clone(), self.slope.clone())
    }
}

/// `Σ c_i·[x_i]` with Novikov coefficients.
#[derive(Clone, Debug)]
pub struct Chain {
    ring: Arc<Ring>,
    coeffs: BTreeMap<usize, NovikovElement>,
}

impl PartialEq for Chain {
    fn eq(&self, other: &Self) -> bool {
        same_ring(&self.ring, &other.ring) && self.coeffs == other.coeffs
    }
}

impl Eq for Chain {}

impl Chain {
    pub fn zero(ring: &Arc<Ring>) -> Chain {
        Chain {
            ring: ring.clone(),
            coeffs: BTreeMap::new(),
        }
    }

    pub fn basis(ring: &Arc<Ring>, i: usize) -> Chain {
        Chain::single(i, NovikovElement::one(ring))
    }

    pub fn single(i: usize, c: NovikovElement) -> Chain {
        let mut out = Chain::zero(c.ring());
        out.add_at(i, &c);
        out
    }

    pub fn from_coeffs(
        ring: &Arc<Ring>,
        coeffs: impl IntoIterator<Item = (usize, NovikovElement)>,
    ) -> Result<Chain> {
        let mut out = Chain::zero(ring);
        for (i, c) in coeffs {
            if !same_ring(ring, c.ring()) {
                return Err(Error::RingMismatch);
            }
            out.add_at(i, &c);
        }
        Ok(out)
    }

    pub fn ring(&self) -> &Arc<Ring> {
        &self.ring
    }

    pub fn coeffs(&self) -> &BTreeMap<usize, NovikovElement> {
        &self.coeffs
    }

    pub fn get(&self, i: usize) -> Option<&NovikovElement> {
        self.coeffs.get(&i)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Largest generator index in the support.
    pub fn max_index(&self) -> Option<usize> {
        self.coeffs.keys().next_back().copied()
    }

    fn add_at(&mut self, i: usize, c: &NovikovElement) {
        let sum = match self.coeffs.get(&i) {
            Some(x) => x.add(c).expect("rings checked by caller"),
            None => c.clone(),
        };
        if sum.is_zero() {
            self.coeffs.remove(&i);
        } else {
            self.coeffs.insert(i, sum);
        }
    }

    pub fn add(&self, other: &Chain) -> Result<Chain> {
        if !same_ring(&self.ring, &other.ring) {
            return Err(Error::RingMismatch);
        }
        let mut out = self.clone();
        for (i, c) in &other.coeffs {
            out.add_at(*i, c);
        }
        Ok(out)
    }

    pub fn neg(&self) -> Chain {
        Chain {
            ring: self.ring.clone(),
            coeffs: self.coeffs.iter().map(|(i, c)| (*i, c.neg())).collect(),
        }
    }

    pub fn sub(&self, other: &Chain) -> Result<Chain> {
        self.add(&other.neg())
    }

    /// Multiplies every coefficient by `x`.
    pub fn scale(&self, x: &NovikovElement) -> Result<Chain> {
        let mut out = Chain::zero(&self.ring);
        for (i, c) in &self.coeffs {
            out.add_at(*i, &c.mul(x)?);
        }
        Ok(out)
    }

    pub fn recast(&self, ring: &Arc<Ring>) -> Result<Chain> {
        let mut out = Chain::zero(ring);
        for (i, c) in &self.coeffs {
            out.add_at(*i, &c.recast(ring)?);
        }
        Ok(out)
    }
}

/// Sparse square-or-rectangular matrix of Novikov entries; `(row, col)` keyed.
#[derive(Clone, Debug)]
pub struct Matrix {
    ring: Arc<Ring>,
    rows: usize,
    cols: usize,
    entries: BTreeMap<(usize, usize), NovikovElement>,
}

impl PartialEq for Matrix {
    fn eq(&self, other: &Self) -> bool {
        same_ring(&self.ring, &other.ring)
            && self.rows == other.rows
            && self.cols == other.cols
            && self.entries == other.entries
    }
}

impl Eq for Matrix {}

impl Matrix {
    pub fn zero(ring: &Arc<Ring>, rows: usize, cols: usize) -> Matrix {
        Matrix {
            ring: ring.clone(),
            rows,
            cols,
            entries: BTreeMap::new(),
        }
    }

    pub fn identity(ring: &Arc<Ring>, n: usize) -> Matrix {
        let mut m = Matrix::zero(ring, n, n);
        for i in 0..n {
            m.entries.insert((i, i), NovikovElement::one(ring));
        }
        m
    }

    pub fn from_entries(
        ring: &Arc<Ring>,
        rows: usize,
        cols: usize,
        entries: impl IntoIterator<Item = ((usize, usize), NovikovElement)>,
    ) -> Result<Matrix> {
        let mut m = Matrix::zero(ring, rows, cols);
        for ((r, c), x) in entries {
            if r >= rows || c >= cols {
                return Err(Error::Malformed(format!(
                    "entry ({r}, {c}) outside a {rows}x{cols} matrix"
                )));
            }
            if !same_ring(ring, x.ring()) {
                return Err(Error::RingMismatch);
            }
            m.add_entry(r, c, &x);
        }
        Ok(m)
    }

    pub fn ring(&self) -> &Arc<Ring> {
        &self.ring
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &BTreeMap<(usize, usize), NovikovElement> {
        &self.entries
    }

    pub fn get(&self, r: usize, c: usize) -> Option<&NovikovElement> {
        self.entries.get(&(r, c))
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub(crate) fn add_entry(&mut self, r: usize, c: usize, x: &NovikovElement) {
        let sum = match self.entries.get(&(r, c)) {
            Some(y) => y.add(x).expect("same ring"),
            None => x.clone(),
        };
        if sum.is_zero() {
            self.entries.remove(&(r, c));
        } else {
            self.entries.insert((r, c), sum);
        }
    }

    pub fn set(&mut self, r: usize, c: usize, x: NovikovElement) -> Result<()> {
        if r >= self.rows || c >= self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows.max(self.cols),
                found: r.max(c),
            });
        }
        if !same_ring(&self.ring, x.ring()) {
            return Err(Error::RingMismatch);
        }
        if x.is_zero() {
            self.entries.remove(&(r, c));
        } else {
            self.entries.insert((r, c), x);
        }
        Ok(())
    }

    pub fn column(&self, c: usize) -> Chain {
        let mut out = Chain::zero(&self.ring);
        for ((r, cc), x) in &self.entries {
            if *cc == c {
                out.add_at(*r, x);
            }
        }
        out
    }

    pub fn apply(&self, v: &Chain) -> Result<Chain> {
        if !same_ring(&self.ring, v.ring()) {
            return Err(Error::RingMismatch);
        }
        if let Some(m) = v.max_index() {
            if m >= self.cols {
                return Err(Error::DimensionMismatch {
                    expected: self.cols,
                    found: m + 1,
                });
            }
        }
        let mut out = Chain::zero(&self.ring);
        for ((r, c), x) in &self.entries {
            if let Some(y) = v.get(*c) {
                out.add_at(*r, &x.mul(y)?);
            }
        }
        Ok(out)
    }

    /// `self · other`.
    pub fn compose(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        if !same_ring(&self.ring, &other.ring) {
            return Err(Error::RingMismatch);
        }
        let mut by_row: BTreeMap<usize, Vec<(usize, &NovikovElement)>> = BTreeMap::new();
        for ((r, c), x) in &other.entries {
            by_row.entry(*r).or_default().push((*c, x));
        }
        let mut out = Matrix::zero(&self.ring, self.rows, other.cols);
        for ((r, k), x) in &self.entries {
            for (c, y) in by_row.get(k).into_iter().flatten() {
                out.add_entry(*r, *c, &x.mul(y)?);
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: other.rows,
            });
        }
        if !same_ring(&self.ring, &other.ring) {
            return Err(Error::RingMismatch);
        }
        let mut out = self.clone();
        for ((r, c), x) in &other.entries {
            out.add_entry(*r, *c, x);
        }
        Ok(out)
    }

    pub fn neg(&self) -> Matrix {
        Matrix {
            ring: self.ring.clone(),
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|(k, x)| (*k, x.neg())).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.add(&other.neg())
    }

    pub fn recast(&self, ring: &Arc<Ring>) -> Result<Matrix> {
        let mut out = Matrix::zero(ring, self.rows, self.cols);
        for ((r, c), x) in &self.entries {
            out.add_entry(*r, *c, &x.recast(ring)?);
        }
        Ok(out)
    }

    /// Submatrix on the given row and column index lists.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        let ri: BTreeMap<usize, usize> = rows.iter().enumerate().map(|(i, r)| (*r, i)).collect();
        let ci: BTreeMap<usize, usize> = cols.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let mut out = Matrix::zero(&self.ring, rows.len(), cols.len());
        for ((r, c), x) in &self.entries {
            if let (Some(a), Some(b)) = (ri.get(r), ci.get(c)) {
                out.entries.insert((*a, *b), x.clone());
            }
        }
        out
    }

    /// Number of pivots obtainable by elimination with unit pivots only.
    pub fn unit_rank(&self) -> Result<usize> {
        Ok(self.eliminate(false)?.0)
    }

    /// Rank over the fraction field: unit pivots first, then fraction-free elimination.
    pub fn fraction_rank(&self) -> Result<usize> {
        let (units, rest) = self.eliminate(false)?;
        Ok(units + rest.eliminate(true)?.0)
    }

    /// Repeated pivoting; returns the pivot count and the untouched remainder.
    fn eliminate(&self, any_pivot: bool) -> Result<(usize, Matrix)> {
        let mut m = self.clone();
        let mut count = 0;
        loop {
            let pivot = m
                .entries
                .iter()
                .find(|(_, x)| any_pivot || x.is_unit())
                .map(|(k, x)| (*k, x.clone()));
            let Some(((pr, pc), p)) = pivot else {
                return Ok((count, m));
            };
            count += 1;
            let prow: Vec<(usize, NovikovElement)> = m
                .entries
                .iter()
                .filter(|((r, _), _)| *r == pr)
                .map(|((_, c), x)| (*c, x.clone()))
                .collect();
            let targets: Vec<(usize, NovikovElement)> = m
                .entries
                .iter()
                .filter(|((r, c), _)| *c == pc && *r != pr)
                .map(|((r, _), x)| (*r, x.clone()))
                .collect();
            let inv = if any_pivot { None } else { Some(p.inverse()?) };
            for (r, a) in targets {
                if any_pivot {
                    // row_r ← p·row_r − a·row_p
                    let row: Vec<(usize, NovikovElement)> = m
                        .entries
                        .iter()
                        .filter(|((rr, _), _)| *rr == r)
                        .map(|((_, c), x)| (*c, x.clone()))
                        .collect();
                    for (c, x) in row {
                        m.entries.remove(&(r, c));
                        m.add_entry(r, c, &x.mul(&p)?);
                    }
                    for (c, x) in &prow {
                        m.add_entry(r, *c, &a.mul(x)?.neg());
                    }
                } else {
                    let factor = a.mul(inv.as_ref().unwrap())?.neg();
                    for (c, x) in &prow {
                        m.add_entry(r, *c, &factor.mul(x)?);
                    }
                }
            }
            m.entries.retain(|(r, c), _| *r != pr && *c != pc);
        }
    }
}

/// Boundary matrices at sampled parameters.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct BoundaryFamily {
    samples: BTreeMap<Rational, Matrix>,
}

impl BoundaryFamily {
    pub fn new() -> BoundaryFamily {
        BoundaryFamily::default()
    }

    pub fn insert(&mut self, s: Rational, m: Matrix) -> Result<()> {
        check_t(&s)?;
        self.samples.insert(s, m);
        Ok(())
    }

    pub fn samples(&self) -> &BTreeMap<Rational, Matrix> {
        &self.samples
    }

    pub fn get(&self, s: &Rational) -> Result<&Matrix> {
        self.samples
            .get(s)
            .ok_or_else(|| Error::MissingSample(s.clone()))
    }
}

/// A quadruple `(Φ, Ψ, K_s, K_t)` with filtration shift bounds `(s₁, s₂)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContinuationData {
    pub phi: Matrix,
    pub psi: Matrix,
    pub k_s: Matrix,
    pub k_t: Matrix,
    pub shift_bounds: (Rational, Rational),
}

impl ContinuationData {
    pub fn identity(
        ring: &Arc<Ring>,
        n: usize,
        shift_bounds: (Rational, Rational),
    ) -> ContinuationData {
        ContinuationData {
            phi: Matrix::identity(ring, n),
            psi: Matrix::identity(ring, n),
            k_s: Matrix::zero(ring, n, n),
            k_t: Matrix::zero(ring, n, n),
            shift_bounds,
        }
    }
}

/// Continuation data from slice `s` to slice `t`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContinuationBlock {
    pub s: Rational,
    pub t: Rational,
    pub data: ContinuationData,
}

/// Generators, sampled boundaries and optional continuation data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComplexData {
    ring: Arc<Ring>,
    generators: Vec<CappedGenerator>,
    boundary: BoundaryFamily,
    continuations: Vec<ContinuationBlock>,
}

impl ComplexData {
    pub fn new(
        ring: Arc<Ring>,
        generators: Vec<CappedGenerator>,
        boundary: BoundaryFamily,
        continuations: Vec<ContinuationBlock>,
    ) -> Result<ComplexData> {
        let n = generators.len();
        let mut names = BTreeSet::new();
        for g in &generators {
            if !names.insert(g.name.as_str()) {
                return Err(Error::Malformed(format!(
                    "duplicate generator name `{}`",
                    g.name
                )));
            }
        }
        if boundary.samples.is_empty() {
            return Err(Error::Malformed("no boundary samples".into()));
        }
        for (s, m) in &boundary.samples {
            if m.rows != n || m.cols != n {
                return Err(Error::Malformed(format!(
                    "boundary at s = {} is {}x{}, expected {n}x{n}",
                    format_rational(s),
                    m.rows,
                    m.cols
                )));
            }
            if !same_ring(&ring, &m.ring) {
                return Err(Error::RingMismatch);
            }
        }
        for b in &continuations {
            check_t(&b.s)?;
            check_t(&b.t)?;
            for m in [&b.data.phi, &b.data.psi, &b.data.k_s, &b.data.k_t] {
                if m.rows != n || m.cols != n {
                    return Err(Error::Malformed(format!(
                        "continuation {} -> {} has a {}x{} block, expected {n}x{n}",
                        format_rational(&b.s),
                        format_rational(&b.t),
                        m.rows,
                        m.cols
                    )));
                }
                if !same_ring(&ring, &m.ring) {
                    return Err(Error::RingMismatch);
                }
            }
        }
        Ok(ComplexData {
            ring,
            generators,
            boundary,
            continuations,
        })
    }

    pub fn ring(&self) -> &Arc<Ring> {
        &self.ring
    }

    pub fn generators(&self) -> &[CappedGenerator] {
        &self.generators
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn boundary(&self) -> &BoundaryFamily {
        &self.boundary
    }

    pub fn continuations(&self) -> &[ContinuationBlock] {
        &self.continuations
    }

    pub fn continuation(&self, s: &Rational, t: &Rational) -> Option<&ContinuationData> {
        self.continuations
            .iter()
            .find(|b| &b.s == s && &b.t == t)
            .map(|b| &b.data)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.generators.iter().position(|g| g.name == name)
    }

    /// `Σ [x]` over the named generators.
    pub fn chain_of(&self, names: &[&str]) -> Result<Chain> {
        let mut c = Chain::zero(&self.ring);
        for name in names {
            let i = self
                .index_of(name)
                .ok_or_else(|| Error::Malformed(format!("unknown generator `{name}`")))?;
            c = c.add(&Chain::basis(&self.ring, i))?;
        }
        Ok(c)
    }

    pub fn slice(&self, s: &Rational) -> Result<Slice<'_>> {
        Ok(Slice {
            complex: self,
            s: s.clone(),
            boundary: self.boundary.get(s)?,
        })
    }

    /// `ℓ_t(c) = max_i η_i(t) − ν_t(c_i)`; `−∞` for the zero chain.
    pub fn ell(&self, chain: &Chain, t: &Rational) -> Result<Extended> {
        check_t(t)?;
        let mut best = Extended::NegInf;
        for (i, c) in &chain.coeffs {
            let g = self.generators.get(*i).ok_or(Error::DimensionMismatch {
                expected: self.len(),
                found: *i + 1,
            })?;
            if let Extended::Finite(v) = c.valuation_at(t)? {
                best = best.max(Extended::Finite(g.eta(t) - v));
            }
        }
        Ok(best)
    }

    /// `t ↦ ℓ_t(c)` on `[0, 1]`; `None` for the zero chain.
    pub fn ell_curve(&self, chain: &Chain) -> Result<Option<PiecewiseAffine>> {
        let mut actions = Vec::new();
        for (i, c) in &chain.coeffs {
            let g = self.generators.get(*i).ok_or(Error::DimensionMismatch {
                expected: self.len(),
                found: *i + 1,
            })?;
            let cloud = PointCloud::new(c.period_pairs().map(|(p, _, _)| p).collect())?;
            actions.push((g.eta_affine(), cloud));
        }
        if actions.is_empty() {
            return Ok(None);
        }
        filtration_curve(&actions).map(Some)
    }

    pub fn apply_boundary(&self, s: &Rational, chain: &Chain) -> Result<Chain> {
        self.boundary.get(s)?.apply(chain)
    }

    /// Sample parameters in increasing order.
    pub fn sample_grid(&self) -> Vec<Rational> {
        self.boundary.samples.keys().cloned().collect()
    }

    /// Checks `∂² = 0`, grading and strict filtration decrease at every `s` in `grid`.
    pub fn validate(&self, grid: &[Rational]) -> Result<ValidationReport> {
        let mut violations = Vec::new();
        for s in grid {
            let d = self.boundary.get(s)?;
            let dd = d.compose(d)?;
            for (r, c) in dd.entries.keys() {
                violations.push(Violation {
                    s: s.clone(),
                    kind: ViolationKind::SquareNonzero {
                        row: *r,
                        column: *c,
                    },
                });
            }
            for (r, c) in d.entries.keys() {
                if self.generators[*r].degree != self.generators[*c].degree - 1 {
                    violations.push(Violation {
                        s: s.clone(),
                        kind: ViolationKind::Grading {
                            row: *r,
                            column: *c,
                        },
                    });
                }
            }
            for j in 0..self.len() {
                let col = d.column(j);
                if col.is_zero() {
                    continue;
                }
                let level = self.generators[j].eta(s);
                let image = self.ell(&col, s)?;
                if image >= Extended::Finite(level.clone()) {
                    violations.push(Violation {
                        s: s.clone(),
                        kind: ViolationKind::Filtration {
                            column: j,
                            level,
                            boundary_level: image,
                        },
                    });
                }
            }
        }
        Ok(ValidationReport { violations })
    }

    /// Homology "ranks" per degree in the given ring mode: minimal generator counts of `H_d`.
    ///
    /// `H_d` needs `n_d − rank(∂_d) − u(∂_{d+1})` generators, where `u` counts unit pivots.
    pub fn homology_ranks(&self, s: &Rational, mode: RingMode) -> Result<BTreeMap<i64, usize>> {
        let ring = self.ring.with_mode(mode);
        let d = self.boundary.get(s)?.recast(&ring)?;
        let mut by_degree: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, g) in self.generators.iter().enumerate() {
            by_degree.entry(g.degree).or_default().push(i);
        }
        let empty = Vec::new();
        let mut out = BTreeMap::new();
        for (deg, idx) in &by_degree {
            let below = by_degree.get(&(deg - 1)).unwrap_or(&empty);
            let above = by_degree.get(&(deg + 1)).unwrap_or(&empty);
            let r_out = d.block(below, idx).fraction_rank()?;
            let u_in = d.block(idx, above).unit_rank()?;
            out.insert(*deg, idx.len() - r_out - u_in);
        }
        Ok(out)
    }
}

/// One sampled complex of a family.
#[derive(Clone, Debug)]
pub struct Slice<'a> {
    pub complex: &'a ComplexData,
    pub s: Rational,
    pub boundary: &'a Matrix,
}

impl Slice<'_> {
    pub fn ell(&self, chain: &Chain) -> Result<Extended> {
        self.complex.ell(chain, &self.s)
    }

    pub fn apply_boundary(&self, chain: &Chain) -> Result<Chain> {
        self.boundary.apply(chain)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    /// Entry `(row, column)` of `∂²` is nonzero.
    SquareNonzero { row: usize, column: usize },
    /// Entry `(row, column)` of `∂` does not lower degree by one.
    Grading { row: usize, column: usize },
    /// `ℓ(∂ e_column) ≥ ℓ(e_column)`.
    Filtration {
        column: usize,
        #[serde(serialize_with = "serialize_rational")]
        level: Rational,
        boundary_level: Extended,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    #[serde(serialize_with = "serialize_rational")]
    pub s: Rational,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = format_rational(&self.s);
        match &self.kind {
            ViolationKind::SquareNonzero { row, column } => {
                write!(f, "s={s}: d^2 has a nonzero entry at ({row}, {column})")
            }
            ViolationKind::Grading { row, column } => {
                write!(f, "s={s}: entry ({row}, {column}) does not lower degree by one")
            }
            ViolationKind::Filtration { column, level, boundary_level } => write!(
                f,
                "s={s}: generator {column} has level {} but its boundary has level {boundary_level}",
                format_rational(level)
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Identity {
    PhiChainMap,
    PsiChainMap,
    PsiPhiHomotopy,
    PhiPsiHomotopy,
    PhiShift,
    PsiShift,
    /// `ω_s ≠ ω_t` on the lattice, so no shift bound holds uniformly over `T^A`-multiples.
    PeriodDrift,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ContinuationViolation {
    pub identity: Identity,
    /// Basis element on which the identity fails.
    pub basis: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ContinuationReport {
    pub violations: Vec<ContinuationViolation>,
}

impl ContinuationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the chain-map, homotopy and filtration-shift identities of a continuation quadruple.
pub fn verify_continuation(
    from: &Slice<'_>,
    to: &Slice<'_>,
    data: &ContinuationData,
) -> Result<ContinuationReport> {
    let n = from.complex.len();
    if to.complex.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: to.complex.len(),
        });
    }
    for m in [&data.phi, &data.psi, &data.k_s, &data.k_t] {
        if m.rows != n || m.cols != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: m.rows.max(m.cols),
            });
        }
    }
    let ds = from.boundary;
    let dt = to.boundary;
    let ring = ds.ring.clone();
    let id = Matrix::identity(&ring, n);
    let checks: [(Identity, Matrix); 4] = [
        (
            Identity::PhiChainMap,
            data.phi.compose(ds)?.sub(&dt.compose(&data.phi)?)?,
        ),
        (
            Identity::PsiChainMap,
            data.psi.compose(dt)?.sub(&ds.compose(&data.psi)?)?,
        ),
        (
            Identity::PsiPhiHomotopy,
            data.psi
                .compose(&data.phi)?
                .sub(&id)?
                .sub(&ds.compose(&data.k_s)?.add(&data.k_s.compose(ds)?)?)?,
        ),
        (
            Identity::PhiPsiHomotopy,
            data.phi
                .compose(&data.psi)?
                .sub(&id)?
                .sub(&dt.compose(&data.k_t)?.add(&data.k_t.compose(dt)?)?)?,
        ),
    ];
    let mut violations = Vec::new();
    for (identity, m) in &checks {
        let cols: BTreeSet<usize> = m.entries.keys().map(|(_, c)| *c).collect();
        violations.extend(cols.into_iter().map(|basis| ContinuationViolation {
            identity: *identity,
            basis: Some(basis),
        }));
    }
    let (s1, s2) = &data.shift_bounds;
    for j in 0..n {
        let e = Chain::basis(&ring, j);
        let bound = |sl: &Slice<'_>, shift: &Rational| -> Result<Extended> {
            Ok(match sl.ell(&e)? {
                Extended::Finite(v) => Extended::Finite(v + shift),
                other => other,
            })
        };
        if to.ell(&data.phi.apply(&e)?)? > bound(from, s1)? {
            violations.push(ContinuationViolation {
                identity: Identity::PhiShift,
                basis: Some(j),
            });
        }
        if from.ell(&data.psi.apply(&e)?)? > bound(to, s2)? {
            violations.push(ContinuationViolation {
                identity: Identity::PsiShift,
                basis: Some(j),
            });
        }
    }
    let sys = &ring.system;
    if from.s != to.s && sys.omega0() != sys.omega1() {
        violations.push(ContinuationViolation {
            identity: Identity::PeriodDrift,
            basis: None,
        });
    }
    Ok(ContinuationReport { violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::{Exponent, PeriodSystem};
    use crate::field::Field;
    use crate::rational::{q, qi};

    fn ring() -> Arc<Ring> {
        let sys = PeriodSystem::new(vec![qi(1), qi(0)], vec![qi(0), qi(1)]).unwrap();
        Ring::new(sys, Field::default(), RingMode::Interval, qi(10)).unwrap()
    }

    fn mono(r: &Arc<Ring>, a: Vec<i64>) -> NovikovElement {
        NovikovElement::monomial(r, Exponent(a), qi(1)).unwrap()
    }

    /// `∂y = T^g x` with `η(x) = ax`, `η(y) = ay`.
    fn pair(ax: i64, ay: i64, g: Vec<i64>) -> ComplexData {
        let r = ring();
        let gens = vec![
            CappedGenerator::new("x", 0, qi(ax), qi(0)),
            CappedGenerator::new("y", 1, qi(ay), qi(0)),
        ];
        let d = Matrix::from_entries(&r, 2, 2, [((0, 1), mono(&r, g))]).unwrap();
        let mut b = BoundaryFamily::new();
        b.insert(qi(0), d).unwrap();
        ComplexData::new(r, gens, b, vec![]).unwrap()
    }

    #[test]
    fn validation() {
        assert!(pair(1, 3, vec![0, 0]).validate(&[qi(0)]).unwrap().ok());
        let bad = pair(3, 1, vec![0, 0]).validate(&[qi(0)]).unwrap();
        assert_eq!(bad.violations.len(), 1);
        assert!(matches!(
            bad.violations[0].kind,
            ViolationKind::Filtration { column: 1, .. }
        ));
        // T^g with positive periods lowers the level enough.
        assert!(pair(3, 1, vec![3, 3]).validate(&[qi(0)]).unwrap().ok());
        assert!(pair(1, 3, vec![0, 0]).validate(&[qi(1)]).is_err());
    }

    #[test]
    fn filtration_levels() {
        let r = ring();
        let gens = vec![CappedGenerator::new("x", 0, qi(2), qi(-1))];
        let mut b = BoundaryFamily::new();
        b.insert(qi(0), Matrix::zero(&r, 1, 1)).unwrap();
        let cx = ComplexData::new(r.clone(), gens, b, vec![]).unwrap();
        assert_eq!(cx.ell(&Chain::zero(&r), &qi(0)).unwrap(), Extended::NegInf);
        assert_eq!(
            cx.ell(&Chain::basis(&r, 0), &q(1, 2)).unwrap(),
            Extended::Finite(q(3, 2))
        );

        let gens = vec![CappedGenerator::new("x", 0, qi(0), qi(0))];
        let mut b = BoundaryFamily::new();
        b.insert(qi(0), Matrix::zero(&r, 1, 1)).unwrap();
        let cx = ComplexData::new(r.clone(), gens, b, vec![]).unwrap();
        let c = Chain::single(0, mono(&r, vec![0, 1]));
        assert_eq!(cx.ell(&c, &qi(1)).unwrap(), Extended::Finite(qi(-1)));
        let curve = cx.ell_curve(&c).unwrap().unwrap();
        assert_eq!(curve.eval(&q(1, 3)).unwrap(), q(-1, 3));
    }

    #[test]
    fn boundary_application() {
        let cx = pair(1, 3, vec![1, 1]);
        let r = cx.ring().clone();
        let dx = cx.apply_boundary(&qi(0), &Chain::basis(&r, 0)).unwrap();
        assert!(dx.is_zero());
        let dy = cx.apply_boundary(&qi(0), &Chain::basis(&r, 1)).unwrap();
        assert_eq!(dy, Chain::single(0, mono(&r, vec![1, 1])));
        assert!(cx.apply_boundary(&qi(0), &dy).unwrap().is_zero());
        assert!(cx.apply_boundary(&q(1, 2), &dy).is_err());
    }

    #[test]
    fn continuation_checks() {
        let cx = pair(1, 3, vec![0, 0]);
        let r = cx.ring().clone();
        let sl = cx.slice(&qi(0)).unwrap();
        let ok = ContinuationData::identity(&r, 2, (qi(0), qi(0)));
        assert!(verify_continuation(&sl, &sl, &ok).unwrap().ok());

        let mut broken = ok.clone();
        broken.k_s.set(1, 0, NovikovElement::one(&r)).unwrap();
        let rep = verify_continuation(&sl, &sl, &broken).unwrap();
        assert!(rep
            .violations
            .iter()
            .any(|v| v.identity == Identity::PsiPhiHomotopy));
    }

    #[test]
    fn scaled_continuation() {
        // Φ scales by T^g, Ψ by T^{-g}; the shifts must absorb the periods of g.
        let sys = PeriodSystem::new(vec![qi(1), qi(1)], vec![qi(1), qi(1)]).unwrap();
        let r = Ring::new(sys, Field::default(), RingMode::Interval, qi(10)).unwrap();
        let one_point = |r: &Arc<Ring>| {
            let gens = vec![CappedGenerator::new("x", 0, qi(0), qi(0))];
            let mut b = BoundaryFamily::new();
            b.insert(qi(0), Matrix::zero(r, 1, 1)).unwrap();
            b.insert(qi(1), Matrix::zero(r, 1, 1)).unwrap();
            ComplexData::new(r.clone(), gens, b, vec![]).unwrap()
        };
        let cx = one_point(&r);
        let mut data = ContinuationData::identity(&r, 1, (qi(-2), qi(0)));
        data.phi = Matrix::from_entries(&r, 1, 1, [((0, 0), mono(&r, vec![1, 1]))]).unwrap();
        data.psi = Matrix::from_entries(&r, 1, 1, [((0, 0), mono(&r, vec![-1, -1]))]).unwrap();
        let (s0, s1) = (cx.slice(&qi(0)).unwrap(), cx.slice(&qi(1)).unwrap());
        let rep = verify_continuation(&s0, &s1, &data).unwrap();
        assert_eq!(
            rep.violations,
            vec![ContinuationViolation {
                identity: Identity::PsiShift,
                basis: Some(0)
            }]
        );
        data.shift_bounds = (qi(-2), qi(2));
        assert!(verify_continuation(&s0, &s1, &data).unwrap().ok());

        // With ω₀ ≠ ω₁ no finite shift covers every T^A·x.
        let generic = ring();
        let cx = one_point(&generic);
        let data = ContinuationData::identity(&generic, 1, (qi(100), qi(100)));
        let rep = verify_continuation(
            &cx.slice(&qi(0)).unwrap(),
            &cx.slice(&qi(1)).unwrap(),
            &data,
        )
        .unwrap();
        assert_eq!(
            rep.violations,
            vec![ContinuationViolation {
                identity: Identity::PeriodDrift,
                basis: None
            }]
        );
    }

    #[test]
    fn homology_of_torsion_pair() {
        let r = ring();
        let gens = vec![
            CappedGenerator::new("x", 0, qi(0), qi(0)),
            CappedGenerator::new("y", 1, qi(1), qi(0)),
        ];
        let one_minus_b = mono(&r, vec![0, 0]).sub(&mono(&r, vec![0, 1])).unwrap();
        let d = Matrix::from_entries(&r, 2, 2, [((0, 1), one_minus_b)]).unwrap();
        let mut b = BoundaryFamily::new();
        b.insert(qi(0), d).unwrap();
        let cx = ComplexData::new(r, gens, b, vec![]).unwrap();
        let h0 = |m| cx.homology_ranks(&qi(0), m).unwrap()[&0];
        assert_eq!(h0(RingMode::Omega0), 1);
        assert_eq!(h0(RingMode::Omega1), 0);
        assert_eq!(h0(RingMode::Interval), 1);
        assert_eq!(cx.homology_ranks(&qi(0), RingMode::Omega1).unwrap()[&1], 0);
    }
}
