//! Lower/upper envelopes of lines in the `g₀g₁`-plane picture and exact piecewise-affine curves.

use std::fmt::Write as _;

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exponents::PeriodPair;
use crate::rational::{format_rational, serialize_rational, Rational};

/// `t ↦ intercept + slope·t`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Affine {
    #[serde(serialize_with = "serialize_rational")]
    pub slope: Rational,
    #[serde(serialize_with = "serialize_rational")]
    pub intercept: Rational,
}

impl Affine {
    pub fn new(intercept: Rational, slope: Rational) -> Affine {
        Affine { slope, intercept }
    }

    pub fn constant(c: Rational) -> Affine {
        Affine::new(c, Rational::zero())
    }

    pub fn eval(&self, t: &Rational) -> Rational {
        &self.intercept + &self.slope * t
    }

    pub fn neg(&self) -> Affine {
        Affine::new(-&self.intercept, -&self.slope)
    }

    pub fn sub(&self, other: &Affine) -> Affine {
        Affine::new(
            &self.intercept - &other.intercept,
            &self.slope - &other.slope,
        )
    }

    /// `t ↦ (1−t)·g0 + t·g1`.
    pub fn from_pair(p: &PeriodPair) -> Affine {
        Affine::new(p.g0.clone(), &p.g1 - &p.g0)
    }

    /// Where two non-parallel lines meet.
    pub fn crossing(&self, other: &Affine) -> Option<Rational> {
        let ds = &self.slope - &other.slope;
        if ds.is_zero() {
            None
        } else {
            Some((&other.intercept - &self.intercept) / ds)
        }
    }
}

/// A nonempty set of distinct points.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointCloud {
    points: Vec<PeriodPair>,
}

impl PointCloud {
    /// Sorts and deduplicates the points.
    pub fn new(mut points: Vec<PeriodPair>) -> Result<PointCloud> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        points.sort();
        points.dedup();
        Ok(PointCloud { points })
    }

    pub fn points(&self) -> &[PeriodPair] {
        &self.points
    }
}

/// `min λ·g0 + g1` over the cloud and the lex-smallest point attaining it.
pub fn min_intercept(cloud: &PointCloud, lambda: &Rational) -> Result<(Rational, PeriodPair)> {
    if lambda.is_negative() {
        return Err(Error::InvalidArgument(format!(
            "lambda = {lambda} must be nonnegative"
        )));
    }
    let (v, p) = cloud
        .points
        .iter()
        .map(|p| (lambda * &p.g0 + &p.g1, p))
        .min()
        .expect("clouds are nonempty");
    Ok((v, p.clone()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StablePoint {
    pub point: PeriodPair,
    /// For every `λ > threshold`, `min_intercept` returns `point`.
    #[serde(serialize_with = "serialize_rational")]
    pub threshold: Rational,
}

/// The point optimal for all large `λ`: the lex-minimum.
pub fn stable_point(cloud: &PointCloud) -> StablePoint {
    let star = cloud.points[0].clone();
    let threshold = cloud
        .points
        .iter()
        .filter(|p| p.g0 > star.g0)
        .map(|p| (&star.g1 - &p.g1) / (&p.g0 - &star.g0))
        .fold(Rational::zero(), |m, x| m.max(x));
    StablePoint {
        point: star,
        threshold,
    }
}

/// `t = 1/(1+λ)`.
pub fn lambda_to_t(lambda: &Rational) -> Result<Rational> {
    if lambda.is_negative() {
        return Err(Error::InvalidArgument(format!(
            "lambda = {lambda} must be nonnegative"
        )));
    }
    Ok((Rational::one() + lambda).recip())
}

/// `λ = (1−t)/t` for `t ∈ (0, 1]`.
pub fn t_to_lambda(t: &Rational) -> Result<Rational> {
    if !t.is_positive() || *t > Rational::one() {
        return Err(Error::OutOfUnitInterval {
            name: "t",
            value: t.clone(),
        });
    }
    Ok((Rational::one() - t) / t)
}

/// A continuous piecewise-affine function on `[knots[0], knots[last]]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PiecewiseAffine {
    #[serde(serialize_with = "serialize_knots")]
    knots: Vec<Rational>,
    pieces: Vec<Affine>,
}

fn serialize_knots<S: serde::Serializer>(
    v: &[Rational],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(format_rational))
}

impl PiecewiseAffine {
    /// Checks that knots increase and that adjacent pieces agree; merges collinear neighbours.
    pub fn new(knots: Vec<Rational>, pieces: Vec<Affine>) -> Result<PiecewiseAffine> {
        if pieces.is_empty() || knots.len() != pieces.len() + 1 {
            return Err(Error::DimensionMismatch {
                expected: pieces.len() + 1,
                found: knots.len(),
            });
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "knots must be strictly increasing".into(),
            ));
        }
        for (i, w) in pieces.windows(2).enumerate() {
            if w[0].eval(&knots[i + 1]) != w[1].eval(&knots[i + 1]) {
                return Err(Error::InvalidArgument(format!(
                    "pieces disagree at {}",
                    format_rational(&knots[i + 1])
                )));
            }
        }
        let mut out_knots = vec![knots[0].clone()];
        let mut out_pieces: Vec<Affine> = Vec::new();
        for (i, p) in pieces.into_iter().enumerate() {
            if out_pieces.last() == Some(&p) {
                *out_knots.last_mut().unwrap() = knots[i + 1].clone();
            } else {
                out_pieces.push(p);
                out_knots.push(knots[i + 1].clone());
            }
        }
        Ok(PiecewiseAffine {
            knots: out_knots,
            pieces: out_pieces,
        })
    }

    pub fn single(lo: Rational, hi: Rational, f: Affine) -> Result<PiecewiseAffine> {
        PiecewiseAffine::new(vec![lo, hi], vec![f])
    }

    pub fn constant(c: Rational) -> PiecewiseAffine {
        PiecewiseAffine {
            knots: vec![Rational::zero(), Rational::one()],
            pieces: vec![Affine::constant(c)],
        }
    }

    pub fn knots(&self) -> &[Rational] {
        &self.knots
    }

    pub fn pieces(&self) -> &[Affine] {
        &self.pieces
    }

    pub fn domain(&self) -> (&Rational, &Rational) {
        (&self.knots[0], self.knots.last().unwrap())
    }

    /// Interior knots.
    pub fn breakpoints(&self) -> &[Rational] {
        &self.knots[1..self.knots.len() - 1]
    }

    pub fn eval(&self, t: &Rational) -> Result<Rational> {
        let (lo, hi) = self.domain();
        if t < lo || t > hi {
            return Err(Error::InvalidArgument(format!(
                "{t} outside the curve's domain"
            )));
        }
        let i = self.knots[1..]
            .partition_point(|k| k < t)
            .min(self.pieces.len() - 1);
        Ok(self.pieces[i].eval(t))
    }

    /// Piece governing `(t, t+ε)`.
    pub fn right_piece(&self, t: &Rational) -> Option<&Affine> {
        let i = self.knots[1..].partition_point(|k| k <= t);
        self.pieces.get(i).filter(|_| t >= &self.knots[0])
    }

    pub fn neg(&self) -> PiecewiseAffine {
        PiecewiseAffine {
            knots: self.knots.clone(),
            pieces: self.pieces.iter().map(Affine::neg).collect(),
        }
    }

    /// Joins curves with abutting domains (as sorted by the caller).
    pub fn concat(parts: &[PiecewiseAffine]) -> Result<PiecewiseAffine> {
        let mut knots = Vec::new();
        let mut pieces = Vec::new();
        for p in parts {
            if let Some(last) = knots.last() {
                if last != &p.knots[0] {
                    return Err(Error::InvalidArgument("curve domains do not abut".into()));
                }
                knots.pop();
            }
            knots.extend(p.knots.iter().cloned());
            pieces.extend(p.pieces.iter().cloned());
        }
        PiecewiseAffine::new(knots, pieces)
    }

    /// Slopes never increase across knots.
    pub fn is_concave(&self) -> bool {
        self.pieces.windows(2).all(|w| w[1].slope <= w[0].slope)
    }

    pub fn is_convex(&self) -> bool {
        self.pieces.windows(2).all(|w| w[1].slope >= w[0].slope)
    }

    /// `t,value` rows at `n+1` equally spaced points of the domain.
    pub fn to_csv(&self, n: usize) -> String {
        let (lo, hi) = self.domain();
        let mut out = String::from("t,value\n");
        let n = n.max(1);
        for i in 0..=n {
            let t = lo + (hi - lo) * Rational::new(i.into(), n.into());
            let v = self.eval(&t).expect("inside domain");
            let _ = writeln!(out, "{},{}", format_rational(&t), format_rational(&v));
        }
        out
    }

    /// `t,value` rows at every knot.
    pub fn breakpoints_csv(&self) -> String {
        let mut out = String::from("t,value\n");
        for k in &self.knots {
            let v = self.eval(k).expect("inside domain");
            let _ = writeln!(out, "{},{}", format_rational(k), format_rational(&v));
        }
        out
    }
}

/// Exact lower envelope of `lines` on `[lo, hi]`.
pub fn lower_envelope(lines: &[Affine], lo: &Rational, hi: &Rational) -> Result<PiecewiseAffine> {
    if lines.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if lo >= hi {
        return Err(Error::InvalidArgument("empty envelope domain".into()));
    }
    // Decreasing slope; among equal slopes only the lowest intercept matters.
    let mut sorted: Vec<&Affine> = lines.iter().collect();
    sorted.sort_by(|a, b| {
        b.slope
            .cmp(&a.slope)
            .then_with(|| a.intercept.cmp(&b.intercept))
    });
    sorted.dedup_by(|b, a| a.slope == b.slope);

    let mut hull: Vec<&Affine> = Vec::new();
    for l in sorted {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            if a.crossing(l).unwrap() <= a.crossing(b).unwrap() {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(l);
    }

    let mut knots = vec![lo.clone()];
    let mut pieces = Vec::new();
    for (i, l) in hull.iter().enumerate() {
        let end = hull.get(i + 1).map(|n| l.crossing(n).unwrap());
        match &end {
            Some(e) if e <= lo => continue,
            _ => {}
        }
        pieces.push((*l).clone());
        match end {
            Some(e) if &e < hi => knots.push(e),
            _ => {
                knots.push(hi.clone());
                break;
            }
        }
    }
    PiecewiseAffine::new(knots, pieces)
}

/// Exact upper envelope of `lines` on `[lo, hi]`.
pub fn upper_envelope(lines: &[Affine], lo: &Rational, hi: &Rational) -> Result<PiecewiseAffine> {
    let neg: Vec<Affine> = lines.iter().map(Affine::neg).collect();
    Ok(lower_envelope(&neg, lo, hi)?.neg())
}

/// `t ↦ min (1−t)·g0 + t·g1` on `[0, 1]`.
pub fn valuation_curve(cloud: &PointCloud) -> PiecewiseAffine {
    let lines: Vec<Affine> = cloud.points.iter().map(Affine::from_pair).collect();
    lower_envelope(&lines, &Rational::zero(), &Rational::one()).expect("nonempty cloud")
}

/// `t ↦ max_i max_{p ∈ cloud_i} η_i(t) − ((1−t)·g0 + t·g1)` on `[0, 1]`.
pub fn filtration_curve(actions: &[(Affine, PointCloud)]) -> Result<PiecewiseAffine> {
    let lines: Vec<Affine> = actions
        .iter()
        .flat_map(|(eta, cloud)| {
            cloud
                .points
                .iter()
                .map(move |p| eta.sub(&Affine::from_pair(p)))
        })
        .collect();
    upper_envelope(&lines, &Rational::zero(), &Rational::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};

    fn cloud(pts: &[(i64, i64)]) -> PointCloud {
        PointCloud::new(
            pts.iter()
                .map(|&(a, b)| PeriodPair::new(qi(a), qi(b)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn intercepts() {
        let c = cloud(&[(0, 3), (2, 0)]);
        assert_eq!(
            min_intercept(&c, &qi(1)).unwrap(),
            (qi(2), PeriodPair::new(qi(2), qi(0)))
        );
        assert_eq!(
            min_intercept(&c, &qi(10)).unwrap(),
            (qi(3), PeriodPair::new(qi(0), qi(3)))
        );
        assert_eq!(min_intercept(&cloud(&[(0, 0)]), &qi(4)).unwrap().0, qi(0));
        assert!(min_intercept(&c, &qi(-1)).is_err());
        assert!(PointCloud::new(vec![]).is_err());
    }

    #[test]
    fn stable_points() {
        let s = stable_point(&cloud(&[(0, 3), (2, 0)]));
        assert_eq!(s.point, PeriodPair::new(qi(0), qi(3)));
        assert_eq!(s.threshold, q(3, 2));
        assert_eq!(
            stable_point(&cloud(&[(1, 1)])).point,
            PeriodPair::new(qi(1), qi(1))
        );
        assert_eq!(
            stable_point(&cloud(&[(0, 5), (0, 2)])).point,
            PeriodPair::new(qi(0), qi(2))
        );
    }

    #[test]
    fn valuation_curves() {
        let c = valuation_curve(&cloud(&[(0, 0)]));
        assert_eq!(c.pieces(), &[Affine::constant(qi(0))]);

        let c = valuation_curve(&cloud(&[(0, 1), (1, 0)]));
        assert_eq!(c.breakpoints(), &[q(1, 2)]);
        assert_eq!(c.eval(&q(1, 4)).unwrap(), q(1, 4));
        assert_eq!(c.eval(&q(3, 4)).unwrap(), q(1, 4));

        let c = valuation_curve(&cloud(&[(0, 3), (2, 0)]));
        assert_eq!(c.breakpoints(), &[q(2, 5)]);
        assert_eq!(c.eval(&q(2, 5)).unwrap(), q(6, 5));
        assert!(c.is_concave());
    }

    #[test]
    fn filtration_curves() {
        let zero = cloud(&[(0, 0)]);
        let c = filtration_curve(&[(Affine::new(qi(1), qi(-2)), zero.clone())]).unwrap();
        assert_eq!(c.pieces(), &[Affine::new(qi(1), qi(-2))]);
        let c = filtration_curve(&[
            (Affine::constant(qi(0)), zero.clone()),
            (Affine::constant(qi(1)), zero.clone()),
        ])
        .unwrap();
        assert_eq!(c.pieces(), &[Affine::constant(qi(1))]);
        let c = filtration_curve(&[(Affine::constant(qi(0)), cloud(&[(0, 0), (0, 1)]))]).unwrap();
        assert_eq!(c.pieces(), &[Affine::constant(qi(0))]);
    }

    #[test]
    fn lambda_substitution() {
        assert_eq!(lambda_to_t(&qi(3)).unwrap(), q(1, 4));
        assert_eq!(t_to_lambda(&q(1, 4)).unwrap(), qi(3));
        assert!(t_to_lambda(&qi(0)).is_err());
    }

    #[test]
    fn csv_output() {
        let c = valuation_curve(&cloud(&[(0, 1), (1, 0)]));
        assert_eq!(c.to_csv(2), "t,value\n0,0\n1/2,1/2\n1,0\n");
        assert_eq!(c.breakpoints_csv(), "t,value\n0,0\n1/2,1/2\n1,0\n");
    }

    #[test]
    fn right_pieces_and_concat() {
        let c = valuation_curve(&cloud(&[(0, 1), (1, 0)]));
        assert_eq!(c.right_piece(&q(1, 2)).unwrap().slope, qi(-1));
        assert_eq!(c.right_piece(&qi(0)).unwrap().slope, qi(1));
        assert!(c.right_piece(&qi(1)).is_none());
        let a = PiecewiseAffine::single(qi(0), q(1, 2), Affine::new(qi(0), qi(1))).unwrap();
        let b = PiecewiseAffine::single(q(1, 2), qi(1), Affine::new(qi(0), qi(1))).unwrap();
        let joined = PiecewiseAffine::concat(&[a, b]).unwrap();
        assert_eq!(joined.pieces().len(), 1);
    }
}
