use std::sync::Arc;

use floerkit::models::random_model;
use floerkit::rational::{q, qi};
use floerkit::{
    boundary_depth, gen_elementary, persistence_barcode, rho, scan_semicontinuity, BoundaryFamily,
    CappedGenerator, Chain, ComplexData, ContinuationBlock, ContinuationData, Exponent, Extended,
    Field, Matrix, ModelSpec, NovikovElement, PeriodSystem, Rational, Ring, RingMode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn trivial_ring() -> Arc<Ring> {
    Ring::new(
        PeriodSystem::trivial(),
        Field::default(),
        RingMode::Interval,
        qi(1),
    )
    .unwrap()
}

/// A random F2 complex over the trivial lattice, with `∂` as column bitmasks.
struct Small {
    cx: ComplexData,
    cols: Vec<u32>,
}

fn random_small(rng: &mut ChaCha8Rng, n: usize) -> Small {
    let r = trivial_ring();
    loop {
        let degrees: Vec<i64> = (0..n).map(|_| rng.gen_range(0..=2)).collect();
        let actions: Vec<i64> = (0..n).map(|_| rng.gen_range(0..8)).collect();
        let slopes: Vec<i64> = (0..n).map(|_| rng.gen_range(-2..=2)).collect();
        let mut cols = vec![0u32; n];
        for j in 0..n {
            for i in 0..n {
                // Strict decrease at both ends of [0, 1].
                let below =
                    actions[i] < actions[j] && actions[i] + slopes[i] < actions[j] + slopes[j];
                if degrees[i] + 1 == degrees[j] && below && rng.gen_bool(0.6) {
                    cols[j] |= 1 << i;
                }
            }
        }
        if (0..n).any(|j| apply(&cols, cols[j]) != 0) {
            continue;
        }
        let gens = (0..n)
            .map(|i| {
                CappedGenerator::new(format!("g{i}"), degrees[i], qi(actions[i]), qi(slopes[i]))
            })
            .collect();
        let mut entries = Vec::new();
        for (j, col) in cols.iter().enumerate() {
            for i in (0..n).filter(|i| col >> i & 1 == 1) {
                entries.push(((i, j), NovikovElement::one(&r)));
            }
        }
        let d = Matrix::from_entries(&r, n, n, entries).unwrap();
        let mut fam = BoundaryFamily::new();
        for s in [qi(0), q(1, 2), qi(1)] {
            fam.insert(s, d.clone()).unwrap();
        }
        let cx = ComplexData::new(r.clone(), gens, fam, vec![]).unwrap();
        return Small { cx, cols };
    }
}

fn apply(cols: &[u32], x: u32) -> u32 {
    (0..cols.len())
        .filter(|j| x >> j & 1 == 1)
        .fold(0, |acc, j| acc ^ cols[j])
}

fn level(cx: &ComplexData, x: u32, t: &Rational) -> Extended {
    (0..cx.len())
        .filter(|i| x >> i & 1 == 1)
        .map(|i| Extended::Finite(cx.generators()[i].eta(t)))
        .max()
        .unwrap_or(Extended::NegInf)
}

fn chain(cx: &ComplexData, x: u32) -> Chain {
    let r = cx.ring();
    Chain::from_coeffs(
        r,
        (0..cx.len())
            .filter(|i| x >> i & 1 == 1)
            .map(|i| (i, NovikovElement::one(r))),
    )
    .unwrap()
}

#[test]
fn rho_matches_coset_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    for _ in 0..60 {
        let n = rng.gen_range(1..=5);
        let sm = random_small(&mut rng, n);
        for a in 1u32..(1 << n) {
            if apply(&sm.cols, a) != 0 {
                continue;
            }
            for t in [qi(0), q(1, 2), qi(1)] {
                let brute = (0u32..(1 << n))
                    .map(|x| level(&sm.cx, a ^ apply(&sm.cols, x), &t))
                    .min()
                    .unwrap();
                let got = rho(&sm.cx, &chain(&sm.cx, a), &t, &qi(1)).unwrap();
                assert_eq!(got.value, brute, "cycle {a:b} at t = {t}");
                if !got.degenerate {
                    assert_eq!(sm.cx.ell(&got.witness, &t).unwrap(), got.value);
                }
                checked += 1;
            }
        }
    }
    assert!(checked > 100);
}

#[test]
fn non_cycles_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sm = loop {
        let sm = random_small(&mut rng, 3);
        if sm.cols.iter().any(|c| *c != 0) {
            break sm;
        }
    };
    let j = (0..3).find(|j| sm.cols[*j] != 0).unwrap();
    assert!(rho(&sm.cx, &chain(&sm.cx, 1 << j), &qi(0), &qi(1)).is_err());
}

#[test]
fn elementary_pair_depth() {
    let spec = ModelSpec {
        n_infinite: 0,
        system: PeriodSystem::trivial(),
        bars: Some(vec![(qi(1), qi(3))]),
        ..ModelSpec::default()
    };
    let cx = gen_elementary(&spec).unwrap();
    assert_eq!(
        boundary_depth(&persistence_barcode(&cx, &qi(0)).unwrap()),
        qi(2)
    );
}

#[test]
fn rho_of_closed_generators_is_their_action() {
    for seed in 0..10 {
        let spec = ModelSpec {
            seed,
            system: PeriodSystem::new(vec![qi(1), qi(1)], vec![qi(1), qi(1)]).unwrap(),
            slope_range: (q(-1, 2), q(1, 2)),
            samples: vec![qi(0), q(1, 3), qi(1)],
            ..ModelSpec::default()
        };
        let m = random_model(&spec).unwrap();
        for (name, z) in m.closed_cycles() {
            let i = m.complex.index_of(&name).unwrap();
            for t in m.complex.sample_grid() {
                let r = rho(&m.complex, &z, &t, &spec.cutoff).unwrap();
                assert_eq!(
                    r.value,
                    Extended::Finite(m.complex.generators()[i].eta(&t)),
                    "seed {seed} {name} t={t}"
                );
            }
        }
    }
}

fn zero_family(ring: &Arc<Ring>, samples: &[Rational]) -> BoundaryFamily {
    let mut fam = BoundaryFamily::new();
    for s in samples {
        fam.insert(s.clone(), Matrix::zero(ring, 2, 2)).unwrap();
    }
    fam
}

#[test]
fn constant_family_is_continuous() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let sm = random_small(&mut rng, 4);
        for a in 1u32..16 {
            if apply(&sm.cols, a) != 0 {
                continue;
            }
            let rep = scan_semicontinuity(&sm.cx, &chain(&sm.cx, a), &sm.cx.sample_grid(), &qi(1))
                .unwrap();
            assert!(rep.usc_at_zero && rep.lsc_at_zero);
            for s in &rep.samples {
                assert_eq!(rep.value_at(&s.t).unwrap(), s.rho);
            }
        }
    }
}

#[test]
fn swapping_continuation_breaks_lower_semicontinuity() {
    // a and b closed with η = 2 and 1; Φ_{0,1} exchanges them.
    let r = trivial_ring();
    let gens = vec![
        CappedGenerator::new("a", 0, qi(2), qi(0)),
        CappedGenerator::new("b", 0, qi(1), qi(0)),
    ];
    let samples = [qi(0), qi(1)];
    let fam = zero_family(&r, &samples);
    let one = NovikovElement::one(&r);
    let swap = Matrix::from_entries(&r, 2, 2, [((0, 1), one.clone()), ((1, 0), one)]).unwrap();
    let data = ContinuationData {
        phi: swap.clone(),
        psi: swap,
        k_s: Matrix::zero(&r, 2, 2),
        k_t: Matrix::zero(&r, 2, 2),
        shift_bounds: (qi(1), qi(1)),
    };
    let block = ContinuationBlock {
        s: qi(0),
        t: qi(1),
        data,
    };
    let cx = ComplexData::new(r.clone(), gens, fam, vec![block]).unwrap();
    let a = Chain::basis(&r, 0);
    let rep = scan_semicontinuity(&cx, &a, &samples, &qi(1)).unwrap();
    assert_eq!(rep.rho0, Extended::Finite(qi(2)));
    assert_eq!(rep.right_limit, Extended::Finite(qi(1)));
    assert!(rep.usc_at_zero);
    assert!(!rep.lsc_at_zero);
    let sl = |s| cx.slice(&s).unwrap();
    let c = cx.continuation(&qi(0), &qi(1)).unwrap();
    assert!(floerkit::verify_continuation(&sl(qi(0)), &sl(qi(1)), c)
        .unwrap()
        .ok());
}

#[test]
fn missing_continuation_is_reported() {
    let r = trivial_ring();
    let gens = vec![
        CappedGenerator::new("x", 0, qi(0), qi(0)),
        CappedGenerator::new("y", 1, qi(3), qi(0)),
    ];
    let mut fam = BoundaryFamily::new();
    fam.insert(qi(0), Matrix::zero(&r, 2, 2)).unwrap();
    let d = Matrix::from_entries(&r, 2, 2, [((0, 1), NovikovElement::one(&r))]).unwrap();
    fam.insert(qi(1), d).unwrap();
    let cx = ComplexData::new(r.clone(), gens, fam, vec![]).unwrap();
    let x = Chain::basis(&r, 0);
    assert!(matches!(
        scan_semicontinuity(&cx, &x, &[qi(0), qi(1)], &qi(1)),
        Err(floerkit::Error::MissingContinuation { .. })
    ));
}

#[test]
fn generic_periods_stay_upper_semicontinuous() {
    // ω₀ ≠ ω₁: the kinetic curve may bend, but never jumps up at 0.
    for seed in 0..12 {
        let spec = ModelSpec {
            seed,
            system: PeriodSystem::new(vec![qi(1)], vec![qi(2)]).unwrap(),
            slope_range: (qi(-1), qi(1)),
            samples: vec![qi(0), q(1, 4), qi(1)],
            exponent_bound: 2,
            ..ModelSpec::default()
        };
        let m = random_model(&spec).unwrap();
        let r = m.complex.ring().clone();
        let mut cycles: Vec<Chain> = m.closed_cycles().into_iter().map(|(_, c)| c).collect();
        // T^g·z shifts the class by a lattice period that differs at the two ends.
        for c in cycles.clone() {
            cycles.push(
                c.scale(&NovikovElement::monomial(&r, Exponent(vec![1]), qi(1)).unwrap())
                    .unwrap(),
            );
        }
        for z in &cycles {
            let rep = scan_semicontinuity(&m.complex, z, &spec.samples, &spec.cutoff).unwrap();
            assert!(rep.usc_at_zero, "seed {seed}");
            for s in &rep.samples {
                assert_eq!(rep.value_at(&s.t).unwrap(), s.rho);
            }
            let curve = rep.curve().unwrap();
            for k in curve.knots() {
                let direct = rho(&m.complex, z, k, &spec.cutoff);
                if let Ok(direct) = direct {
                    assert_eq!(direct.value, Extended::Finite(curve.eval(k).unwrap()));
                }
            }
        }
    }
}
