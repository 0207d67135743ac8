//! Spectral invariants, spectra, boundary depth, bottleneck distance and the t-scan.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::complex::{Chain, ComplexData, Matrix};
use crate::envelope::{Affine, PiecewiseAffine};
use crate::error::{Error, Result};
use crate::exponents::check_t;
use crate::novikov::Order;
use crate::rational::{format_rational, serialize_rational, Extended, Rational};
use crate::reduce::{best_approximation_tracked, generator_shifts, Barcode, Events, Operator};

/// `ρ_t(a)` together with the representative realizing it.
#[derive(Clone, Debug)]
pub struct SpectralResult {
    pub value: Extended,
    /// A representative `α = a − ∂y` with `ℓ_t(α) = value`.
    pub witness: Chain,
    /// The chain `y`.
    pub boundary_preimage: Chain,
    /// Whether `value` lies in the action spectrum at this cutoff.
    pub spectrum_member: bool,
    /// Set when the class is zero (`value = −∞`).
    pub degenerate: bool,
}

/// `ρ_t(a) = inf ℓ_t(a + ∂y)` for a cycle `a` of `(CF, ∂_t)`.
pub fn rho(
    cx: &ComplexData,
    cycle: &Chain,
    t: &Rational,
    cutoff: &Rational,
) -> Result<SpectralResult> {
    check_t(t)?;
    let d = cx.boundary().get(t)?;
    let mut out = rho_on(cx, d, cycle, t, cutoff, None)?;
    if let Extended::Finite(v) = &out.value {
        out.spectrum_member = spectrum(cx, t, cutoff)?.contains(v);
    }
    Ok(out)
}

/// `ρ` computed with an explicit boundary matrix, possibly at a parameter that is not a sample.
fn rho_on(
    cx: &ComplexData,
    d: &Matrix,
    cycle: &Chain,
    t: &Rational,
    cutoff: &Rational,
    events: Option<&RefCell<Events>>,
) -> Result<SpectralResult> {
    if !d.apply(cycle)?.is_zero() {
        return Err(Error::NotACycle(t.clone()));
    }
    let ring = cx.ring();
    let degenerate = |witness: Chain, y: Chain| SpectralResult {
        value: Extended::NegInf,
        witness,
        boundary_preimage: y,
        spectrum_member: false,
        degenerate: true,
    };
    if cycle.is_zero() {
        return Ok(degenerate(Chain::zero(ring), Chain::zero(ring)));
    }
    let cols = (0..d.cols()).map(|j| d.column(j)).collect();
    let op = Operator::with_shifts(ring, cols, generator_shifts(cx))?;
    let order = Order::weighted(t.clone())?;
    let approx = best_approximation_tracked(&op, cycle, &order, cutoff, events)?;
    let witness = approx.residual;
    if witness.is_zero() {
        return Ok(degenerate(witness, approx.preimage));
    }
    let value = cx.ell(&witness, t)?;
    debug_assert_eq!(
        value,
        approx
            .achieved
            .finite()
            .map_or(Extended::NegInf, |p| Extended::Finite(-p.weight(t)))
    );
    Ok(SpectralResult {
        value,
        witness,
        boundary_preimage: approx.preimage,
        spectrum_member: false,
        degenerate: false,
    })
}

/// Basis of the subgroup of ℤ² spanned by `vs`: at most one vector with nonzero (positive)
/// first coordinate, and at most one of the form `(0, b)` with `b > 0`.
fn lattice_basis(mut vs: Vec<(BigInt, BigInt)>) -> (Option<(BigInt, BigInt)>, Option<BigInt>) {
    vs.retain(|(x, y)| !x.is_zero() || !y.is_zero());
    loop {
        let mut nz: Vec<usize> = (0..vs.len()).filter(|&i| !vs[i].0.is_zero()).collect();
        if nz.len() <= 1 {
            break;
        }
        nz.sort_by(|&a, &b| vs[a].0.abs().cmp(&vs[b].0.abs()));
        let p = nz[0];
        let (px, py) = vs[p].clone();
        for &i in &nz[1..] {
            let q = vs[i].0.div_floor(&px);
            vs[i].0 -= &q * &px;
            vs[i].1 -= &q * &py;
        }
    }
    let mut first = None;
    let mut b = BigInt::zero();
    for (x, y) in vs {
        if x.is_zero() {
            b = b.gcd(&y);
        } else if x.is_negative() {
            first = Some((-x, -y));
        } else {
            first = Some((x, y));
        }
    }
    (first, if b.is_zero() { None } else { Some(b) })
}

fn ceil_div(a: &BigInt, b: &BigInt) -> BigInt {
    -((-a).div_floor(b))
}

/// The period pairs of ℤ^k lying in `[0, cutoff]²`.
pub fn period_pairs_in_box(cx: &ComplexData, cutoff: &Rational) -> Vec<(Rational, Rational)> {
    let sys = &cx.ring().system;
    let mut den = cutoff.denom().clone();
    for w in sys.omega0().iter().chain(sys.omega1()) {
        den = den.lcm(w.denom());
    }
    let scale = |r: &Rational| (r * Rational::from_integer(den.clone())).to_integer();
    let vs = sys
        .omega0()
        .iter()
        .zip(sys.omega1())
        .map(|(a, b)| (scale(a), scale(b)))
        .collect();
    let hi = scale(cutoff);
    let (first, second) = lattice_basis(vs);
    let mut out = Vec::new();
    let unscale = |x: BigInt| Rational::new(x, den.clone());
    // Points m·(a1, a2) + n·(0, b) with both coordinates in [0, hi].
    let column = |x: &BigInt, y0: &BigInt, out: &mut Vec<(Rational, Rational)>| match &second {
        Some(b) => {
            let n_lo = ceil_div(&-y0, b);
            let n_hi = (&hi - y0).div_floor(b);
            let mut n = n_lo;
            while n <= n_hi {
                out.push((unscale(x.clone()), unscale(y0 + &n * b)));
                n += 1;
            }
        }
        None => {
            if !y0.is_negative() && *y0 <= hi {
                out.push((unscale(x.clone()), unscale(y0.clone())));
            }
        }
    };
    match &first {
        Some((a1, a2)) => {
            let mut m = BigInt::zero();
            while &m * a1 <= hi {
                column(&(&m * a1), &(&m * a2), &mut out);
                m += 1;
            }
        }
        None => column(&BigInt::zero(), &BigInt::zero(), &mut out),
    }
    out.sort();
    out
}

/// `{η_i(t) − ω_t(p)}` over generators `i` and period pairs `p ∈ [0, cutoff]²`.
pub fn spectrum(cx: &ComplexData, t: &Rational, cutoff: &Rational) -> Result<BTreeSet<Rational>> {
    check_t(t)?;
    if !cutoff.is_positive() {
        return Err(Error::NonPositiveCutoff);
    }
    let pairs = period_pairs_in_box(cx, cutoff);
    let one = Rational::one();
    let mut out = BTreeSet::new();
    for g in cx.generators() {
        let eta = g.eta(t);
        for (p0, p1) in &pairs {
            out.insert(&eta - ((&one - t) * p0 + t * p1));
        }
    }
    Ok(out)
}

/// The longest finite bar; zero when there is none.
pub fn boundary_depth(barcode: &Barcode) -> Rational {
    barcode
        .finite()
        .filter_map(|b| b.length().finite().cloned())
        .max()
        .unwrap_or_else(Rational::zero)
}

fn linf(a: &(Rational, Rational), b: &(Rational, Rational)) -> Rational {
    std::cmp::max((&a.0 - &b.0).abs(), (&a.1 - &b.1).abs())
}

/// Perfect matching in a bipartite graph (Kuhn's algorithm).
fn has_perfect_matching(n: usize, adj: &[Vec<usize>]) -> bool {
    fn augment(
        u: usize,
        adj: &[Vec<usize>],
        seen: &mut [bool],
        mate: &mut [Option<usize>],
    ) -> bool {
        for &v in &adj[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            if mate[v].is_none_or(|w| augment(w, adj, seen, mate)) {
                mate[v] = Some(u);
                return true;
            }
        }
        false
    }
    let mut mate = vec![None; n];
    (0..n).all(|u| augment(u, adj, &mut vec![false; n], &mut mate))
}

fn finite_bottleneck(a: &[(Rational, Rational)], b: &[(Rational, Rational)]) -> Rational {
    let half = |p: &(Rational, Rational)| (&p.1 - &p.0) / Rational::from_integer(2.into());
    let mut candidates: BTreeSet<Rational> = BTreeSet::new();
    candidates.insert(Rational::zero());
    for p in a.iter().chain(b) {
        candidates.insert(half(p));
    }
    for p in a {
        for q in b {
            candidates.insert(linf(p, q));
        }
    }
    let candidates: Vec<Rational> = candidates.into_iter().collect();
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    // Left: a_0..a_na, then diagonal copies of b. Right: b_0..b_nb, then diagonal copies of a.
    let feasible = |c: &Rational| {
        let mut adj = vec![Vec::new(); n];
        for (i, p) in a.iter().enumerate() {
            for (j, q) in b.iter().enumerate() {
                if linf(p, q) <= *c {
                    adj[i].push(j);
                }
            }
            if half(p) <= *c {
                adj[i].push(nb + i);
            }
        }
        for (j, q) in b.iter().enumerate() {
            if half(q) <= *c {
                adj[na + j].push(j);
            }
            adj[na + j].extend(nb..nb + na);
        }
        has_perfect_matching(n, &adj)
    };
    let (mut lo, mut hi) = (0usize, candidates.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if feasible(&candidates[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    candidates[lo].clone()
}

/// Bottleneck distance between two barcodes, degree by degree.
pub fn bottleneck(x: &Barcode, y: &Barcode) -> Extended {
    type Split = (Vec<(Rational, Rational)>, Vec<Rational>);
    let split = |bc: &Barcode| {
        let mut out: BTreeMap<i64, Split> = BTreeMap::new();
        for b in &bc.bars {
            let e = out.entry(b.degree).or_default();
            match &b.death {
                Extended::Finite(d) => e.0.push((b.birth.clone(), d.clone())),
                _ => e.1.push(b.birth.clone()),
            }
        }
        out
    };
    let (sx, sy) = (split(x), split(y));
    let degrees: BTreeSet<i64> = sx.keys().chain(sy.keys()).copied().collect();
    let empty = Split::default();
    let mut worst = Rational::zero();
    for deg in degrees {
        let (fa, ia) = sx.get(&deg).unwrap_or(&empty);
        let (fb, ib) = sy.get(&deg).unwrap_or(&empty);
        if ia.len() != ib.len() {
            return Extended::PosInf;
        }
        let (mut ia, mut ib) = (ia.clone(), ib.clone());
        ia.sort();
        ib.sort();
        for (p, q) in ia.iter().zip(&ib) {
            worst = worst.max((p - q).abs());
        }
        worst = worst.max(finite_bottleneck(fa, fb));
    }
    Extended::Finite(worst)
}

/// `ρ` on `[from, to]` for fixed boundary data, as an exact piecewise-affine curve.
///
/// Between consecutive events no comparison made by the reduction changes outcome, so the
/// witness found at the left end stays optimal and `ρ` follows its filtration line.
/// Returns `None` when the cycle is a boundary.
fn rho_sweep(
    cx: &ComplexData,
    d: &Matrix,
    cycle: &Chain,
    from: &Rational,
    to: &Rational,
    cutoff: &Rational,
) -> Result<Option<PiecewiseAffine>> {
    let sys = &cx.ring().system;
    let shifts = generator_shifts(cx);
    let mut knots = vec![from.clone()];
    let mut pieces = Vec::new();
    let mut t = from.clone();
    loop {
        let events = RefCell::new(Events::new(t.clone(), to.clone()));
        let r = rho_on(cx, d, cycle, &t, cutoff, Some(&events))?;
        if r.degenerate {
            return Ok(None);
        }
        let order = Order::Weighted(t.clone());
        let lead = r
            .witness
            .coeffs()
            .iter()
            .flat_map(|(i, c)| c.terms().keys().map(move |a| (*i, a)))
            .map(|(i, a)| &sys.pair_unchecked(a) + &shifts[i])
            .min_by(|p, q| order.cmp_pairs(p, q))
            .expect("nonzero witness");
        let next = events.into_inner().next.unwrap_or_else(|| to.clone());
        pieces.push(Affine::from_pair(&lead).neg());
        knots.push(next.clone());
        if next == *to {
            break;
        }
        t = next;
    }
    PiecewiseAffine::new(knots, pieces).map(Some)
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanSample {
    #[serde(serialize_with = "serialize_rational")]
    pub t: Rational,
    pub rho: Extended,
    /// `ℓ_0(Ψ α_t)` for the witness `α_t`, when continuation data back to 0 is available.
    pub pullback_level: Option<Extended>,
}

#[derive(Clone, Debug)]
pub struct ScanSpan {
    pub from: Rational,
    pub to: Rational,
    /// `ρ` on `(from, to]` using the data at `to`; its value at `from` is the right limit there.
    pub curve: Option<PiecewiseAffine>,
}

#[derive(Clone, Debug)]
pub struct SemicontinuityReport {
    pub samples: Vec<ScanSample>,
    pub spans: Vec<ScanSpan>,
    pub rho0: Extended,
    /// `lim_{t→0+} ρ_t`.
    pub right_limit: Extended,
    pub usc_at_zero: bool,
    pub lsc_at_zero: bool,
}

impl SemicontinuityReport {
    /// `ρ_t` for `t` in some span (the sample value at the span's right end).
    pub fn value_at(&self, t: &Rational) -> Result<Extended> {
        if t.is_zero() {
            return Ok(self.rho0.clone());
        }
        for s in &self.spans {
            if t > &s.from && t <= &s.to {
                return Ok(match &s.curve {
                    Some(c) => Extended::Finite(c.eval(t)?),
                    None => Extended::NegInf,
                });
            }
        }
        Err(Error::OutOfUnitInterval {
            name: "t",
            value: t.clone(),
        })
    }

    /// The whole curve on `[0, max grid]` when it is finite and continuous at every span junction.
    pub fn curve(&self) -> Option<PiecewiseAffine> {
        let parts: Option<Vec<PiecewiseAffine>> =
            self.spans.iter().map(|s| s.curve.clone()).collect();
        PiecewiseAffine::concat(&parts?).ok()
    }

    /// `t,rho` rows: sample values first, then the breakpoints of each span.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,rho,kind\n");
        for s in &self.samples {
            out.push_str(&format!("{},{},sample\n", format_rational(&s.t), s.rho));
        }
        // Neighbouring spans share an endpoint; it is repeated only where ρ jumps.
        let mut last = None;
        for span in &self.spans {
            if let Some(c) = &span.curve {
                for k in c.knots() {
                    let v = c.eval(k).expect("knot in domain");
                    let row = format!("{},{},curve\n", format_rational(k), format_rational(&v));
                    if last.as_ref() != Some(&row) {
                        out.push_str(&row);
                    }
                    last = Some(row);
                }
            }
        }
        out
    }
}

/// Scans `ρ_t(Φ_{0,t} a)` over `grid` (sampled parameters including 0).
///
/// Each gap `(s_k, s_{k+1}]` uses the boundary and continuation data at `s_{k+1}`. When no
/// continuation block `0 → s` is present, the identity is used if `∂_s = ∂_0`.
pub fn scan_semicontinuity(
    cx: &ComplexData,
    cycle: &Chain,
    grid: &[Rational],
    cutoff: &Rational,
) -> Result<SemicontinuityReport> {
    let mut grid: Vec<Rational> = grid.to_vec();
    grid.sort();
    grid.dedup();
    let zero = Rational::zero();
    if grid.first() != Some(&zero) {
        return Err(Error::MissingSample(zero));
    }
    for s in &grid {
        check_t(s)?;
        cx.boundary().get(s)?;
    }
    let d0 = cx.boundary().get(&zero)?;
    let pushed = |s: &Rational| -> Result<Chain> {
        if s.is_zero() {
            return Ok(cycle.clone());
        }
        match cx.continuation(&zero, s) {
            Some(c) => c.phi.apply(cycle),
            None if cx.boundary().get(s)? == d0 => Ok(cycle.clone()),
            None => Err(Error::MissingContinuation {
                from: Box::new(zero.clone()),
                to: Box::new(s.clone()),
            }),
        }
    };
    let mut samples = Vec::new();
    for s in &grid {
        let c = pushed(s)?;
        let r = rho_on(cx, cx.boundary().get(s)?, &c, s, cutoff, None)?;
        let pullback_level = match cx.continuation(&zero, s) {
            Some(data) if !s.is_zero() => Some(cx.ell(&data.psi.apply(&r.witness)?, &zero)?),
            _ => None,
        };
        samples.push(ScanSample {
            t: s.clone(),
            rho: r.value,
            pullback_level,
        });
    }
    let mut spans = Vec::new();
    for w in grid.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let curve = rho_sweep(cx, cx.boundary().get(b)?, &pushed(b)?, a, b, cutoff)?;
        spans.push(ScanSpan {
            from: a.clone(),
            to: b.clone(),
            curve,
        });
    }
    let rho0 = samples[0].rho.clone();
    let right_limit = match spans.first() {
        Some(s) => match &s.curve {
            Some(c) => Extended::Finite(c.eval(&s.from)?),
            None => Extended::NegInf,
        },
        None => rho0.clone(),
    };
    Ok(SemicontinuityReport {
        usc_at_zero: right_limit <= rho0,
        lsc_at_zero: right_limit >= rho0,
        samples,
        spans,
        rho0,
        right_limit,
    })
}
