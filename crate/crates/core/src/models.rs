//! Legal desk-scale instances: elementary complexes, random filtered changes of basis,
//! the pathological `1 − T^B` operator and line-segment families.
//!
//! Randomness is ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64(seed)`). The elementary
//! model reads stream 0 and the change of basis reads stream 1, so density 0 reproduces the
//! elementary model exactly.

use std::sync::Arc;

use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::complex::{
    BoundaryFamily, CappedGenerator, Chain, ComplexData, ContinuationBlock, ContinuationData,
    Matrix,
};
use crate::error::{Error, Result};
use crate::exponents::{check_t, Exponent, PeriodSystem};
use crate::field::Field;
use crate::novikov::{NovikovElement, Ring, RingMode};
use crate::rational::{format_rational, q, qi, Extended, Rational};
use crate::reduce::Operator;

/// Grid resolution for drawn actions and slopes.
const STEPS: i64 = 8;
const MAX_TRIES: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    pub seed: u64,
    pub n_pairs: usize,
    pub n_infinite: usize,
    pub system: PeriodSystem,
    pub field: Field,
    pub mode: RingMode,
    pub cutoff: Rational,
    /// Actions at `t = 0` are drawn from this range.
    pub action_range: (Rational, Rational),
    /// Action slopes are drawn from this range.
    pub slope_range: (Rational, Rational),
    /// Lattice coordinates of drawn exponents lie in `[−b, b]`.
    pub exponent_bound: i64,
    /// Probability that an eligible off-diagonal slot of the change of basis is filled.
    pub density: Rational,
    /// Sample parameters at which the boundary is emitted.
    pub samples: Vec<Rational>,
    /// Prescribed `(birth, death)` pairs at `t = 0`, overriding `n_pairs`.
    pub bars: Option<Vec<(Rational, Rational)>>,
}

impl Default for ModelSpec {
    fn default() -> ModelSpec {
        ModelSpec {
            seed: 0,
            n_pairs: 2,
            n_infinite: 1,
            system: PeriodSystem::new(vec![qi(1), qi(2)], vec![qi(2), qi(1)]).expect("same length"),
            field: Field::default(),
            mode: RingMode::Interval,
            cutoff: qi(6),
            action_range: (qi(0), qi(8)),
            slope_range: (qi(0), qi(0)),
            exponent_bound: 1,
            density: q(1, 2),
            samples: vec![qi(0)],
            bars: None,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InfeasibleSpec(m.into()));
        if self.action_range.0 > self.action_range.1 {
            return bad("empty action range");
        }
        if self.slope_range.0 > self.slope_range.1 {
            return bad("empty slope range");
        }
        if self.exponent_bound < 0 {
            return bad("negative exponent bound");
        }
        if self.density.is_negative() || self.density > Rational::one() {
            return bad("density outside [0, 1]");
        }
        if !self.cutoff.is_positive() {
            return Err(Error::NonPositiveCutoff);
        }
        if self.samples.is_empty() {
            return bad("no sample parameters");
        }
        for s in &self.samples {
            check_t(s)?;
        }
        if let Some(bars) = &self.bars {
            for (b, d) in bars {
                if b >= d {
                    return Err(Error::InfeasibleSpec(format!(
                        "bar ({}, {}) has nonpositive length",
                        format_rational(b),
                        format_rational(d)
                    )));
                }
            }
        } else if self.n_pairs > 0 && self.action_range.0 == self.action_range.1 {
            return bad("a degenerate action range cannot hold a bar");
        }
        Ok(())
    }

    pub fn ring(&self) -> Result<Arc<Ring>> {
        Ring::new(
            self.system.clone(),
            self.field,
            self.mode,
            self.cutoff.clone(),
        )
    }
}

fn draw(rng: &mut ChaCha8Rng, range: &(Rational, Rational)) -> Rational {
    let k = rng.gen_range(0..=STEPS);
    &range.0 + (&range.1 - &range.0) * q(k, STEPS)
}

fn draw_exponent(rng: &mut ChaCha8Rng, rank: usize, bound: i64) -> Exponent {
    Exponent((0..rank).map(|_| rng.gen_range(-bound..=bound)).collect())
}

fn nonzero_coefficient(rng: &mut ChaCha8Rng, field: Field) -> Rational {
    match field {
        Field::Prime(p) => qi(rng.gen_range(1..p) as i64),
        Field::Rationals => {
            let n = rng.gen_range(1..=3);
            if rng.gen_bool(0.5) {
                qi(n)
            } else {
                qi(-n)
            }
        }
    }
}

fn sorted_samples(spec: &ModelSpec) -> Vec<Rational> {
    let mut s = spec.samples.clone();
    s.sort();
    s.dedup();
    s
}

fn family_of(d: &Matrix, samples: &[Rational]) -> Result<BoundaryFamily> {
    let mut fam = BoundaryFamily::new();
    for s in samples {
        fam.insert(s.clone(), d.clone())?;
    }
    Ok(fam)
}

/// Direct sum of two-term complexes `∂y_j = T^{g_j} x_j` and closed generators.
///
/// At `t = 0` the barcode is the prescribed (or drawn) bar multiset plus one infinite bar per
/// closed generator.
pub fn gen_elementary(spec: &ModelSpec) -> Result<ComplexData> {
    spec.validate()?;
    let ring = spec.ring()?;
    let sys = &ring.system;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bars = match &spec.bars {
        Some(b) => b.clone(),
        None => (0..spec.n_pairs)
            .map(|_| loop {
                let (a, b) = (
                    draw(&mut rng, &spec.action_range),
                    draw(&mut rng, &spec.action_range),
                );
                if a != b {
                    break if a < b { (a, b) } else { (b, a) };
                }
            })
            .collect(),
    };
    let mut gens = Vec::new();
    let mut entries = Vec::new();
    for (j, (birth, death)) in bars.iter().enumerate() {
        let deg = rng.gen_range(0..=1i64);
        // η_x(t) = birth + ω₀(g) + t·sx and η_y(t) = death + t·sy; strict decrease at t = 0 is
        // automatic, and at t = 1 needs death + sy > birth + ω₀(g) − ω₁(g) + sx.
        let mut pick = None;
        for _ in 0..MAX_TRIES {
            let g = draw_exponent(&mut rng, sys.rank(), spec.exponent_bound);
            let p = sys.pair_unchecked(&g);
            if p.g0.is_negative() || p.g1.is_negative() || !ring.keeps(&g) {
                continue;
            }
            let (sx, sy) = (
                draw(&mut rng, &spec.slope_range),
                draw(&mut rng, &spec.slope_range),
            );
            if death + &sy > birth + &p.g0 - &p.g1 + &sx {
                pick = Some((g, p, sx, sy));
                break;
            }
        }
        let (g, p, sx, sy) = match pick {
            Some(x) => x,
            None => {
                let s = spec.slope_range.0.clone();
                (
                    Exponent::zero(sys.rank()),
                    crate::exponents::PeriodPair::zero(),
                    s.clone(),
                    s,
                )
            }
        };
        let x = gens.len();
        gens.push(CappedGenerator::new(
            format!("x{j}"),
            deg,
            birth + &p.g0,
            sx,
        ));
        gens.push(CappedGenerator::new(
            format!("y{j}"),
            deg + 1,
            death.clone(),
            sy,
        ));
        let c = nonzero_coefficient(&mut rng, spec.field);
        entries.push(((x, x + 1), NovikovElement::monomial(&ring, g, c)?));
    }
    for k in 0..spec.n_infinite {
        let deg = rng.gen_range(0..=1i64);
        let a = draw(&mut rng, &spec.action_range);
        let s = draw(&mut rng, &spec.slope_range);
        gens.push(CappedGenerator::new(format!("z{k}"), deg, a, s));
    }
    let n = gens.len();
    let d = Matrix::from_entries(&ring, n, n, entries)?;
    let fam = family_of(&d, &sorted_samples(spec))?;
    ComplexData::new(ring, gens, fam, vec![])
}

/// `ℓ(T^A·e_i) < η_j` at `t = 0` and `t = 1`, hence on `[0, 1]`.
fn strictly_below(
    gens: &[CappedGenerator],
    i: usize,
    j: usize,
    pair: &crate::exponents::PeriodPair,
) -> bool {
    let (zero, one) = (Rational::zero(), Rational::one());
    gens[i].eta(&zero) - &pair.g0 < gens[j].eta(&zero)
        && gens[i].eta(&one) - &pair.g1 < gens[j].eta(&one)
}

/// The change of basis `Q = I + N`: unit diagonal, strictly filtration-decreasing nilpotent `N`.
fn basis_change(spec: &ModelSpec, cx: &ComplexData) -> Result<Matrix> {
    let ring = cx.ring();
    let sys = &ring.system;
    let gens = cx.generators();
    let n = gens.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| gens[*a].action0.cmp(&gens[*b].action0).then(a.cmp(b)));
    let density = {
        let (num, den) = (spec.density.numer(), spec.density.denom());
        (
            i64::try_from(num).unwrap_or(0),
            i64::try_from(den).unwrap_or(1),
        )
    };
    let mut q = Matrix::identity(ring, n);
    for (pos, &j) in order.iter().enumerate() {
        for &i in &order[..pos] {
            if gens[i].degree != gens[j].degree || density.0 == 0 {
                continue;
            }
            if rng.gen_range(0..density.1) >= density.0 {
                continue;
            }
            let found = (0..MAX_TRIES).find_map(|_| {
                let a = draw_exponent(&mut rng, sys.rank(), spec.exponent_bound);
                let p = sys.pair_unchecked(&a);
                let positive = sys.rank() == 0 || (p.g0.is_positive() && p.g1.is_positive());
                (positive && ring.keeps(&a) && strictly_below(gens, i, j, &p)).then_some(a)
            });
            if let Some(a) = found {
                let c = nonzero_coefficient(&mut rng, spec.field);
                q.set(i, j, NovikovElement::monomial(ring, a, c)?)?;
            }
        }
    }
    Ok(q)
}

/// `Q⁻¹ = Σ_{k<n} (−N)^k` for `Q = I + N` with `N` nilpotent.
fn unipotent_inverse(q: &Matrix) -> Result<Matrix> {
    let n = q.rows();
    let id = Matrix::identity(q.ring(), n);
    let minus_n = id.sub(q)?;
    let mut term = id.clone();
    let mut out = id;
    for _ in 1..n.max(1) {
        term = term.compose(&minus_n)?;
        if term.is_zero() {
            break;
        }
        out = out.add(&term)?;
    }
    Ok(out)
}

/// A conjugated model with its change of basis.
#[derive(Clone, Debug)]
pub struct RandomModel {
    pub complex: ComplexData,
    pub q: Matrix,
    pub q_inv: Matrix,
}

impl RandomModel {
    /// `Q⁻¹·z` for every closed generator `z`, the cycles carrying the infinite bars.
    pub fn closed_cycles(&self) -> Vec<(String, Chain)> {
        self.complex
            .generators()
            .iter()
            .enumerate()
            .filter(|(_, g)| g.name.starts_with('z'))
            .map(|(i, g)| (g.name.clone(), self.q_inv.column(i)))
            .collect()
    }

    /// Whether every off-diagonal entry of `Q` and `Q⁻¹` still lowers the filtration on `[0, 1]`.
    pub fn basis_change_is_filtered(&self) -> bool {
        let sys = &self.complex.ring().system;
        let gens = self.complex.generators();
        [&self.q, &self.q_inv].iter().all(|m| {
            m.entries()
                .iter()
                .filter(|((i, j), _)| i != j)
                .all(|((i, j), x)| {
                    x.terms()
                        .keys()
                        .all(|a| strictly_below(gens, *i, *j, &sys.pair_unchecked(a)))
                })
        })
    }
}

/// `gen_elementary` conjugated by a random filtered change of basis, keeping `Q`.
pub fn random_model(spec: &ModelSpec) -> Result<RandomModel> {
    let base = gen_elementary(spec)?;
    let q = basis_change(spec, &base)?;
    let q_inv = unipotent_inverse(&q)?;
    let d0 = base.boundary().get(&sorted_samples(spec)[0])?;
    let d = q_inv.compose(d0)?.compose(&q)?;
    let ring = base.ring().clone();
    let fam = family_of(&d, &sorted_samples(spec))?;
    let complex = ComplexData::new(ring, base.generators().to_vec(), fam, vec![])?;
    Ok(RandomModel { complex, q, q_inv })
}

/// `gen_elementary` conjugated by a random filtered change of basis: `∂' = Q⁻¹·∂·Q`.
pub fn gen_random(spec: &ModelSpec) -> Result<ComplexData> {
    Ok(random_model(spec)?.complex)
}

/// `n` slopes from `[−bound, bound]` (stream 2 of the seed), with `min ≤ 0 ≤ max`.
pub fn draw_slopes(seed: u64, n: usize, bound: &Rational) -> Vec<Rational> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let range = (-bound, bound.clone());
    let mut a: Vec<Rational> = (0..n).map(|_| draw(&mut rng, &range)).collect();
    if n > 0 && (a.iter().all(|x| x.is_positive()) || a.iter().all(|x| x.is_negative())) {
        let i = rng.gen_range(0..n);
        a[i] = Rational::zero();
    }
    a
}

/// A line family over `random_model(spec)` with slopes from `draw_slopes`, halved until the
/// family is legal and `Q` stays filtered on `[0, 1]`.
pub fn random_line_family(
    spec: &ModelSpec,
    slope_bound: &Rational,
    alpha_norm: &Rational,
) -> Result<RandomModel> {
    let model = random_model(spec)?;
    let mut slopes = draw_slopes(spec.seed, model.complex.len(), slope_bound);
    for _ in 0..16 {
        match line_family(&model.complex, &slopes, alpha_norm) {
            Ok(cx) => {
                let out = RandomModel {
                    complex: cx,
                    ..model.clone()
                };
                if out.basis_change_is_filtered() {
                    return Ok(out);
                }
            }
            Err(Error::InfeasibleSpec(_)) => {}
            Err(e) => return Err(e),
        }
        slopes = slopes
            .iter()
            .map(|a| a / Rational::from_integer(2.into()))
            .collect();
    }
    let zero = vec![Rational::zero(); model.complex.len()];
    Ok(RandomModel {
        complex: line_family(&model.complex, &zero, alpha_norm)?,
        ..model
    })
}

/// The ring of the pathological example: `B` with periods `(0, 1)`, interval mode.
pub fn example_96_ring(cutoff: Rational) -> Result<Arc<Ring>> {
    let sys = PeriodSystem::new(vec![qi(0)], vec![qi(1)])?;
    Ring::new(sys, Field::default(), RingMode::Interval, cutoff)
}

fn one_minus_tb(ring: &Arc<Ring>) -> Result<NovikovElement> {
    NovikovElement::from_terms(
        ring,
        [(Exponent(vec![0]), qi(1)), (Exponent(vec![1]), qi(-1))],
    )
}

/// The 1×1 operator `1 − T^B`.
pub fn example_96(cutoff: Rational) -> Result<Operator> {
    let ring = example_96_ring(cutoff)?;
    let col = Chain::single(0, one_minus_tb(&ring)?);
    Operator::new(&ring, 1, vec![col])
}

/// `1 − T^B` as a differential `∂y = (1 − T^B)·x` with `η_x = 0`, `η_y = 1`.
pub fn example_96_complex(cutoff: Rational) -> Result<ComplexData> {
    let ring = example_96_ring(cutoff)?;
    let d = Matrix::from_entries(&ring, 2, 2, [((0, 1), one_minus_tb(&ring)?)])?;
    let mut fam = BoundaryFamily::new();
    fam.insert(qi(0), d)?;
    let gens = vec![
        CappedGenerator::new("x", 0, qi(0), qi(0)),
        CappedGenerator::new("y", 1, qi(1), qi(0)),
    ];
    ComplexData::new(ring, gens, fam, vec![])
}

/// Shift constants `(s₁, s₂) = (max_i(−a_i), max_i(a_i))`.
pub fn shift_constants(slopes: &[Rational]) -> (Rational, Rational) {
    let s1 = slopes
        .iter()
        .map(|a| -a)
        .max()
        .unwrap_or_else(Rational::zero);
    let s2 = slopes.iter().max().cloned().unwrap_or_else(Rational::zero);
    (s1, s2)
}

/// The family `η_i(t) = η_i(0) − t·|α|·a_i` over a `t`-independent boundary.
///
/// Emits the boundary at every sample of `base` and identity continuation data `0 → s` with
/// shift bounds `s·|α|·(s₁, s₂)`. The period vectors must agree, since a perturbation that
/// pairs nontrivially with the lattice shifts `T^A`-multiples without bound. Fails when the new
/// actions break strict filtration decrease somewhere on `[0, 1]`.
pub fn line_family(
    base: &ComplexData,
    slopes: &[Rational],
    alpha_norm: &Rational,
) -> Result<ComplexData> {
    let n = base.len();
    if slopes.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: slopes.len(),
        });
    }
    if alpha_norm.is_negative() {
        return Err(Error::InvalidArgument(
            "alpha norm must be nonnegative".into(),
        ));
    }
    let ring = base.ring().clone();
    if ring.system.omega0() != ring.system.omega1() {
        return Err(Error::InvalidArgument(
            "line families need omega0 = omega1 on the lattice; otherwise the identity has no uniform shift bound"
                .into(),
        ));
    }
    let grid = base.sample_grid();
    let d = base.boundary().get(&grid[0])?.clone();
    for s in &grid[1..] {
        if base.boundary().get(s)? != &d {
            return Err(Error::InvalidArgument("base boundary depends on s".into()));
        }
    }
    let gens: Vec<CappedGenerator> = base
        .generators()
        .iter()
        .zip(slopes)
        .map(|(g, a)| {
            CappedGenerator::new(
                g.name.clone(),
                g.degree,
                g.action0.clone(),
                &g.slope - alpha_norm * a,
            )
        })
        .collect();
    let scaled: Vec<Rational> = slopes.iter().map(|a| alpha_norm * a).collect();
    let (s1, s2) = shift_constants(&scaled);
    let zero = Rational::zero();
    let blocks = grid
        .iter()
        .filter(|s| !s.is_zero())
        .map(|s| ContinuationBlock {
            s: zero.clone(),
            t: s.clone(),
            data: ContinuationData::identity(&ring, n, (s * &s1, s * &s2)),
        })
        .collect();
    let cx = ComplexData::new(ring, gens, family_of(&d, &grid)?, blocks)?;
    for t in [Rational::zero(), Rational::one()] {
        for j in 0..n {
            let level = cx.ell(&d.column(j), &t)?;
            if level >= Extended::Finite(cx.generators()[j].eta(&t)) {
                return Err(Error::InfeasibleSpec(format!(
                    "slopes break filtration decrease of column {j} at t = {}",
                    format_rational(&t)
                )));
            }
        }
    }
    Ok(cx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::verify_continuation;
    use crate::invariants::boundary_depth;
    use crate::reduce::{persistence_barcode, Bar, Barcode};

    fn exact_system() -> PeriodSystem {
        PeriodSystem::new(vec![qi(1), qi(2)], vec![qi(1), qi(2)]).unwrap()
    }

    #[test]
    fn prescribed_pair() {
        let spec = ModelSpec {
            n_infinite: 0,
            bars: Some(vec![(qi(1), qi(3))]),
            ..ModelSpec::default()
        };
        let cx = gen_elementary(&spec).unwrap();
        let bc = persistence_barcode(&cx, &qi(0)).unwrap();
        assert_eq!(bc.bars.len(), 1);
        assert_eq!(
            (bc.bars[0].birth.clone(), bc.bars[0].death.clone()),
            (qi(1), Extended::Finite(qi(3)))
        );
        let bad = ModelSpec {
            bars: Some(vec![(qi(3), qi(1))]),
            ..ModelSpec::default()
        };
        assert!(matches!(
            gen_elementary(&bad),
            Err(Error::InfeasibleSpec(_))
        ));
    }

    #[test]
    fn closed_generators_only() {
        let spec = ModelSpec {
            n_pairs: 0,
            n_infinite: 2,
            ..ModelSpec::default()
        };
        let cx = gen_elementary(&spec).unwrap();
        assert!(cx.boundary().get(&qi(0)).unwrap().is_zero());
        let bc = persistence_barcode(&cx, &qi(0)).unwrap();
        assert_eq!(bc.infinite().count(), 2);
    }

    #[test]
    fn depth_is_longest_prescribed_bar() {
        let bars = vec![(qi(0), qi(2)), (qi(1), qi(6)), (qi(3), qi(4))];
        let spec = ModelSpec {
            bars: Some(bars),
            ..ModelSpec::default()
        };
        let cx = gen_elementary(&spec).unwrap();
        assert_eq!(
            boundary_depth(&persistence_barcode(&cx, &qi(0)).unwrap()),
            qi(5)
        );
    }

    #[test]
    fn zero_density_is_elementary() {
        let spec = ModelSpec {
            seed: 7,
            density: qi(0),
            ..ModelSpec::default()
        };
        assert_eq!(gen_random(&spec).unwrap(), gen_elementary(&spec).unwrap());
    }

    #[test]
    fn conjugation_preserves_barcode() {
        let mut differs = false;
        for seed in 0..20 {
            let spec = ModelSpec {
                seed,
                n_pairs: 3,
                density: qi(1),
                ..ModelSpec::default()
            };
            let a = gen_elementary(&spec).unwrap();
            let b = gen_random(&spec).unwrap();
            assert!(b.validate(&[qi(0)]).unwrap().ok());
            differs |= a.boundary() != b.boundary();
            let (ba, bb) = (
                persistence_barcode(&a, &qi(0)).unwrap(),
                persistence_barcode(&b, &qi(0)).unwrap(),
            );
            assert_eq!(ba, bb, "seed {seed}");
        }
        assert!(differs);
    }

    #[test]
    fn shift_constants_from_slopes() {
        assert_eq!(shift_constants(&[qi(1), qi(-2)]), (qi(2), qi(1)));
        assert_eq!(shift_constants(&[qi(0), qi(0)]), (qi(0), qi(0)));
    }

    #[test]
    fn line_family_continuations_verify() {
        let spec = ModelSpec {
            seed: 3,
            system: exact_system(),
            action_range: (qi(0), qi(16)),
            samples: vec![qi(0), q(1, 2), qi(1)],
            ..ModelSpec::default()
        };
        let base = gen_random(&spec).unwrap();
        let generic = gen_random(&ModelSpec {
            system: ModelSpec::default().system,
            ..spec.clone()
        })
        .unwrap();
        assert!(line_family(&generic, &vec![qi(0); generic.len()], &qi(1)).is_err());
        let slopes: Vec<Rational> = (0..base.len()).map(|i| q(i as i64 % 3 - 1, 4)).collect();
        let fam = line_family(&base, &slopes, &qi(1)).unwrap();
        for b in fam.continuations() {
            let rep = verify_continuation(
                &fam.slice(&b.s).unwrap(),
                &fam.slice(&b.t).unwrap(),
                &b.data,
            )
            .unwrap();
            assert!(rep.ok(), "{:?}", rep);
        }
        let bc: Barcode = persistence_barcode(&fam, &qi(1)).unwrap();
        assert!(bc
            .bars
            .iter()
            .all(|b: &Bar| b.length() > Extended::Finite(qi(0))));
    }

    #[test]
    fn pathological_operator_ranks() {
        let cx = example_96_complex(qi(10)).unwrap();
        let h = |m| cx.homology_ranks(&qi(0), m).unwrap()[&0];
        assert_eq!((h(RingMode::Omega0), h(RingMode::Omega1)), (1, 0));
    }
}
