//! Constructive variational witnesses: Ekeland points, mean value points, and
//! subgradients of the enlargement that certify a given directional slope.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{eps_enlargement, SubgradientSample};
use crate::error::{Error, Result};
use crate::func_model::minimize::{arrangement_minimum, effective_box, kink_lines, Line};
use crate::func_model::{
    minimize_on_box, restrict_to_segment, AffinePiece, BoxRegion, ExtReal, MaxAffine, PLFunction,
    Point,
};
use crate::grid::GridSpec;

/// Residual allowed in the re-verified perturbed minimality.
pub const EKELAND_TOL: f64 = 1e-9;
/// Pairings `<x*, d>` within this of the target still qualify.
pub const PAIRING_TOL: f64 = 1e-9;

const MAX_RETRIES: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EkelandWitness {
    pub x_eps: Point,
    pub lambda: f64,
    pub eps: f64,
    /// `max_y f(x_eps) - f(y) - (eps/lambda) |y - x_eps|_inf` over the probe grid.
    pub perturbed_min_gap: f64,
    pub f_xbar: f64,
    pub f_xeps: f64,
    /// `|x_eps - xbar|_inf`.
    pub distance: f64,
    pub probes: usize,
    /// Number of times `lambda` was enlarged because `x_eps` hit the ball boundary.
    pub retries: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MVIWitness {
    pub t0: f64,
    pub x0: Point,
    /// `f'(x0; xbar - x)`.
    pub dd: ExtReal,
    pub lambda: f64,
    pub f_x: f64,
    pub f_x0: f64,
}

impl MVIWitness {
    /// `dd - lambda` (should be nonnegative).
    pub fn slope_slack(&self) -> f64 {
        match self.dd {
            ExtReal::Finite(v) => v - self.lambda,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    /// `f(x) + t0 lambda - f(x0)` (should be nonnegative).
    pub fn value_slack(&self) -> f64 {
        self.f_x + self.t0 * self.lambda - self.f_x0
    }
}

/// Minimizer of `y -> f(y) + (eps/lambda) |y - xbar|_inf` over the sup-norm ball
/// `B(xbar, lambda)`, smallest point among ties.
///
/// Requires `f(xbar) <= inf_B f + eps`. The result satisfies `f(x_eps) <= f(xbar)`,
/// `|x_eps - xbar| <= lambda`, and minimizes `f + (eps/lambda) |. - x_eps|` over the
/// ball; the last property is re-checked on a probe grid of about 1000 points.
pub fn ekeland_point(f: &PLFunction, xbar: &Point, eps: f64, lambda: f64) -> Result<EkelandWitness> {
    xbar.check_dim(f.dim())?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    let f_xbar = f.finite_value(xbar)?;
    let ball = effective_box(f, &BoxRegion::ball_inf(xbar, lambda)?)?;
    let inf = minimize_on_box(f, &ball, &GridSpec::default_for(ball))?
        .value
        .to_f64();
    if f_xbar > inf + eps + 1e-12 * (1.0 + f_xbar.abs()) {
        return Err(Error::PreconditionSci {
            fxbar: f_xbar,
            inf,
            eps,
        });
    }

    let mut lam = lambda;
    let mut retries = 0;
    loop {
        let x_eps = penalized_argmin(f, xbar, eps / lam, lam)?;
        let distance = x_eps.sub(xbar).norm_inf();
        if distance >= lam * (1.0 - 1e-12) && retries < MAX_RETRIES {
            lam *= 1.0 + 1e-6;
            retries += 1;
            continue;
        }
        let (gap, probes) = perturbed_min_gap(f, &x_eps, xbar, eps, lam)?;
        return Ok(EkelandWitness {
            x_eps,
            lambda: lam,
            eps,
            perturbed_min_gap: gap,
            f_xbar,
            f_xeps: f.raw_value(&x_eps),
            distance,
            probes,
            retries,
        });
    }
}

fn penalized_argmin(f: &PLFunction, xbar: &Point, k: f64, lambda: f64) -> Result<Point> {
    let ball = effective_box(f, &BoxRegion::ball_inf(xbar, lambda)?)?;
    if f.dim() == 2 {
        let mut lines = kink_lines(f);
        let (c0, c1) = (xbar.get(0), xbar.get(1));
        lines.push(Line { normal: [1.0, 0.0], rhs: c0 });
        lines.push(Line { normal: [0.0, 1.0], rhs: c1 });
        lines.push(Line { normal: [1.0, -1.0], rhs: c0 - c1 });
        lines.push(Line { normal: [1.0, 1.0], rhs: c0 + c1 });
        let eval = |y: &Point| f.raw_value(y) + k * y.sub(xbar).norm_inf();
        return Ok(arrangement_minimum(&eval, &lines, &ball).0);
    }
    let phi = with_sup_penalty(f, xbar, k)?;
    Ok(minimize_on_box(&phi, &ball, &GridSpec::default_for(ball))?.point)
}

/// `f + k |. - c|_inf` as a PL function: the penalty is added to every piece in
/// each of its `2n` linear branches, which commutes with the outer min.
fn with_sup_penalty(f: &PLFunction, c: &Point, k: f64) -> Result<PLFunction> {
    let n = f.dim();
    let comps = f
        .components()
        .iter()
        .map(|comp| {
            let mut pieces = Vec::with_capacity(comp.pieces().len() * 2 * n);
            for p in comp.pieces() {
                for j in 0..n {
                    for s in [1.0, -1.0] {
                        let mut g = p.gradient;
                        g.set(j, g.get(j) + s * k);
                        pieces.push(AffinePiece::new(g, p.offset - s * k * c.get(j)));
                    }
                }
            }
            MaxAffine::new(pieces)
        })
        .collect::<Result<Vec<_>>>()?;
    PLFunction::new(comps, f.domain().copied())
}

/// Largest violation of `f(y) + (eps/lambda) |y - x_eps|_inf >= f(x_eps)` over a
/// lattice of about 1000 points in `B(x_eps, lambda/4) ∩ B(xbar, lambda) ∩ dom f`.
/// Returns the gap and the number of probes.
pub fn perturbed_min_gap(
    f: &PLFunction,
    x_eps: &Point,
    xbar: &Point,
    eps: f64,
    lambda: f64,
) -> Result<(f64, usize)> {
    let f0 = f.finite_value(x_eps)?;
    let window = BoxRegion::ball_inf(x_eps, lambda / 4.0)?
        .intersect(&BoxRegion::ball_inf(xbar, lambda)?)
        .ok_or(Error::EmptyRegion)?;
    let window = effective_box(f, &window)?;
    // Per-axis lattice over the clipped window: 1001, 32^2 or 10^3 probes.
    let cells = match f.dim() {
        1 => 1000,
        2 => 31,
        _ => 9,
    };
    let mut probes = vec![window.lower];
    for i in 0..f.dim() {
        let (lo, w) = (window.lower.get(i), window.width(i));
        let steps = if w > 0.0 { cells } else { 0 };
        probes = probes
            .iter()
            .flat_map(|p| {
                (0..=steps).map(move |k| {
                    let mut q = *p;
                    q.set(i, if k == steps { lo + w } else { lo + w * k as f64 / cells as f64 });
                    q
                })
            })
            .collect();
    }
    let k = eps / lambda;
    let gap = probes
        .par_iter()
        .map(|y| f0 - f.raw_value(y) - k * y.sub(x_eps).norm_inf())
        .reduce(|| f64::NEG_INFINITY, f64::max);
    Ok((gap, probes.len()))
}

/// Smallest minimizer `t0` of `g(t) = f(x + t (xbar - x)) - t lambda` on `[0, 1]`.
///
/// Requires `lambda <= f(xbar) - f(x)` (any finite `lambda` when `xbar` is outside
/// `dom f`). Then `t0 < 1`, `f'(x0; xbar - x) >= lambda` and
/// `f(x0) <= f(x) + t0 lambda` at `x0 = x + t0 (xbar - x)`.
pub fn mean_value_witness(f: &PLFunction, x: &Point, xbar: &Point, lambda: f64) -> Result<MVIWitness> {
    x.check_dim(f.dim())?;
    xbar.check_dim(f.dim())?;
    if !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be finite, got {lambda}")));
    }
    let f_x = f.finite_value(x)?;
    if let ExtReal::Finite(fb) = f.value(xbar) {
        let bound = fb - f_x;
        if lambda > bound + 1e-12 * (1.0 + fb.abs().max(f_x.abs())) {
            return Err(Error::PreconditionLambda { lambda, bound });
        }
    }
    if x == xbar {
        return Ok(MVIWitness {
            t0: 0.0,
            x0: *x,
            dd: ExtReal::Finite(0.0),
            lambda,
            f_x,
            f_x0: f_x,
        });
    }
    let profile = restrict_to_segment(f, x, xbar)?;
    let m = profile.tilted(-lambda).minimum()?;
    // g(0) <= g(1) makes t = 0 a minimizer whenever t = 1 is one; the smallest
    // minimizer only lands on 1 through rounding at the precondition boundary.
    let t0 = if m.t >= 1.0 { 0.0 } else { m.t };
    let x0 = profile.point_at(t0);
    Ok(MVIWitness {
        t0,
        x0,
        dd: profile.right_slope(t0),
        lambda,
        f_x,
        f_x0: f.raw_value(&x0),
    })
}

/// A sample of the enlargement at `xbar` whose pairing with `d` reaches `lambda`.
///
/// Among qualifying samples the largest pairing wins, then the sample closest to
/// `xbar`, then the lexicographically smallest `(x, x*)`.
pub fn find_enlarged_subgradient(
    f: &PLFunction,
    xbar: &Point,
    d: &Point,
    lambda: f64,
    eps: f64,
    grid: &GridSpec,
) -> Result<SubgradientSample> {
    d.check_dim(f.dim())?;
    let samples = eps_enlargement(f, xbar, eps, grid)?;
    samples
        .into_iter()
        .filter(|s| s.xstar.dot(d) >= lambda - PAIRING_TOL)
        .min_by(|a, b| {
            b.xstar
                .dot(d)
                .total_cmp(&a.xstar.dot(d))
                .then(a.x.sub(xbar).norm().total_cmp(&b.x.sub(xbar).norm()))
                .then(a.x.lex_cmp(&b.x))
                .then(a.xstar.lex_cmp(&b.xstar))
        })
        .ok_or(Error::NoSampleFound { target: lambda, h: grid.h })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::directional_derivative;

    fn p(v: f64) -> Point {
        Point::scalar(v)
    }
    fn pt(c: &[f64]) -> Point {
        Point::new(c).unwrap()
    }
    fn abs_1d() -> PLFunction {
        PLFunction::max_1d(&[(1.0, 0.0), (-1.0, 0.0)]).unwrap()
    }
    fn l1_2d() -> PLFunction {
        let mut pieces = Vec::new();
        for s1 in [1.0, -1.0] {
            for s2 in [1.0, -1.0] {
                pieces.push(AffinePiece::new(pt(&[s1, s2]), 0.0));
            }
        }
        PLFunction::max_affine(pieces).unwrap()
    }

    // |y| + 1.25 |y - 0.2| is 0.25 at y = 0 and 0.2 at y = 0.2, so the
    // minimizer of the penalized objective is xbar itself.
    #[test]
    fn ekeland_abs_stays_at_xbar() {
        let w = ekeland_point(&abs_1d(), &p(0.2), 0.5, 0.4).unwrap();
        assert!((w.x_eps.get(0) - 0.2).abs() < 1e-12);
        assert!(w.f_xeps <= w.f_xbar);
        assert!(w.distance <= w.lambda);
        assert!(w.perturbed_min_gap <= EKELAND_TOL);
    }

    #[test]
    fn ekeland_at_global_min() {
        let w = ekeland_point(&abs_1d(), &p(0.0), 0.1, 0.5).unwrap();
        assert_eq!(w.x_eps, p(0.0));
        assert!(w.perturbed_min_gap <= 0.0);
    }

    #[test]
    fn ekeland_l1_moves_to_origin() {
        let w = ekeland_point(&l1_2d(), &pt(&[0.1, 0.1]), 0.5, 0.5).unwrap();
        assert!(w.x_eps.norm_inf() < 1e-12);
        assert!(w.perturbed_min_gap <= EKELAND_TOL);
    }

    #[test]
    fn ekeland_rejects_far_from_inf() {
        let r = ekeland_point(&abs_1d(), &p(1.0), 0.1, 0.5);
        assert!(matches!(r, Err(Error::PreconditionSci { .. })));
    }

    #[test]
    fn ekeland_3d() {
        let f = PLFunction::max_affine(vec![
            AffinePiece::new(pt(&[1.0, 1.0, 1.0]), 0.0),
            AffinePiece::new(pt(&[-1.0, -1.0, -1.0]), 0.0),
        ])
        .unwrap();
        let w = ekeland_point(&f, &pt(&[0.1, 0.0, 0.0]), 0.2, 0.2).unwrap();
        assert!(w.f_xeps <= w.f_xbar);
        assert!(w.distance <= w.lambda);
        assert!(w.perturbed_min_gap <= EKELAND_TOL);
    }

    #[test]
    fn mvi_abs_example() {
        let w = mean_value_witness(&abs_1d(), &p(1.0), &p(-2.0), 1.0).unwrap();
        assert!((w.t0 - 1.0 / 3.0).abs() < 1e-12);
        assert!(w.x0.get(0).abs() < 1e-12);
        assert_eq!(w.dd, ExtReal::Finite(3.0));
        assert!(w.f_x0 <= 1.0 + 1.0 / 3.0);
    }

    #[test]
    fn mvi_affine_is_flat() {
        let f = PLFunction::max_1d(&[(2.0, 0.0)]).unwrap();
        let w = mean_value_witness(&f, &p(0.0), &p(1.0), 2.0).unwrap();
        assert_eq!(w.t0, 0.0);
        assert_eq!(w.x0, p(0.0));
        assert_eq!(w.dd, ExtReal::Finite(2.0));
    }

    #[test]
    fn mvi_negative_lambda_in_2d() {
        let f = PLFunction::max_affine(vec![
            AffinePiece::new(pt(&[1.0, 0.0]), 0.0),
            AffinePiece::new(pt(&[0.0, 1.0]), 0.0),
        ])
        .unwrap();
        let w = mean_value_witness(&f, &pt(&[1.0, 1.0]), &pt(&[-1.0, -1.0]), -2.0).unwrap();
        assert_eq!(w.t0, 0.0);
        assert_eq!(w.dd, ExtReal::Finite(-2.0));
        let check = directional_derivative(&f, &pt(&[1.0, 1.0]), &pt(&[-2.0, -2.0])).unwrap();
        assert_eq!(check, ExtReal::Finite(-2.0));
    }

    #[test]
    fn mvi_degenerate_direction() {
        let w = mean_value_witness(&abs_1d(), &p(0.3), &p(0.3), -0.5).unwrap();
        assert_eq!(w.t0, 0.0);
        assert_eq!(w.dd, ExtReal::Finite(0.0));
    }

    #[test]
    fn mvi_rejects_large_lambda() {
        let r = mean_value_witness(&abs_1d(), &p(0.0), &p(1.0), 1.5);
        assert!(matches!(r, Err(Error::PreconditionLambda { .. })));
    }

    #[test]
    fn mvi_toward_infinite_value() {
        let f = abs_1d().with_domain(BoxRegion::cube(1, -1.0, 1.0).unwrap()).unwrap();
        let w = mean_value_witness(&f, &p(0.0), &p(3.0), 10.0).unwrap();
        assert!(w.t0 < 1.0);
        assert!(w.slope_slack() >= 0.0);
        assert!(w.value_slack() >= -1e-12);
    }

    fn grid1(lo: f64, hi: f64) -> GridSpec {
        GridSpec::new(1.0 / 64.0, BoxRegion::cube(1, lo, hi).unwrap()).unwrap()
    }

    #[test]
    fn enlarged_subgradient_examples() {
        let s = find_enlarged_subgradient(&abs_1d(), &p(0.0), &p(1.0), 0.9, 0.25, &grid1(-1.0, 1.0))
            .unwrap();
        assert_eq!(s, SubgradientSample { x: p(0.0), fx: 0.0, xstar: p(1.0) });

        let f = PLFunction::max_1d(&[(2.0, 1.0), (-1.0, 0.0)]).unwrap();
        let s = find_enlarged_subgradient(&f, &p(-1.0 / 3.0), &p(1.0), 1.5, 0.25, &grid1(-1.0, 1.0))
            .unwrap();
        assert_eq!(s.xstar, p(2.0));

        let g = PLFunction::min_max_1d(&[&[(1.0, -1.0), (-1.0, 1.0)], &[(1.0, 1.0), (-1.0, -1.0)]])
            .unwrap();
        let s = find_enlarged_subgradient(&g, &p(0.0), &p(-1.0), 0.9, 0.25, &grid1(-2.0, 2.0)).unwrap();
        assert_eq!(s.xstar, p(-1.0));
    }

    #[test]
    fn enlarged_subgradient_reports_missing_sample() {
        let r = find_enlarged_subgradient(&abs_1d(), &p(0.0), &p(1.0), 5.0, 0.25, &grid1(-1.0, 1.0));
        assert!(matches!(r, Err(Error::NoSampleFound { .. })));
    }
}
