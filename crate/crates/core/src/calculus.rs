//! Directional derivatives, subdifferentials and the enlarged subdifferential.
//!
//! The enlargement at `xbar` collects pairs `(x, x*)` with `x*` a subgradient at
//! a nearby point `x`:
//!
//! ```text
//! |x - xbar| <= eps,   |f(x) - f(xbar)| <= eps,   <x*, x - xbar> <= eps
//! ```
//!
//! and [`verify_link`] checks that `f'(xbar; d)` never exceeds the support of
//! that set in direction `d`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func_model::{activity_tol, restrict_to_segment, BoxRegion, ExtReal, PLFunction, Point};
use crate::grid::GridSpec;
use crate::polytope::Polytope;

/// Tolerance of the link inequality `f'(xbar; d) <= sup <enlargement, d> + tol`.
pub const LINK_TOL: f64 = 1e-7;

/// `{1, 1/2, ..., 1/64}`.
pub fn default_schedule() -> Vec<f64> {
    (0..7).map(|k| 0.5f64.powi(k)).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    Euclidean,
    Sup,
}

impl Norm {
    pub fn of(&self, v: &Point) -> f64 {
        match self {
            Norm::Euclidean => v.norm(),
            Norm::Sup => v.norm_inf(),
        }
    }
}

/// A subgradient `xstar` of `f` at `x`, with `fx = f(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgradientSample {
    pub x: Point,
    pub fx: f64,
    pub xstar: Point,
}

/// Lower Dini derivative `f'(xbar; d)`, read off as the first slope of the
/// exact profile of `f` on `[xbar, xbar + d]`.
pub fn directional_derivative(f: &PLFunction, xbar: &Point, d: &Point) -> Result<ExtReal> {
    xbar.check_dim(f.dim())?;
    d.check_dim(f.dim())?;
    if !f.in_domain(xbar) {
        return Err(Error::NotInDomain(xbar.to_string()));
    }
    if d.is_zero() {
        return Ok(ExtReal::Finite(0.0));
    }
    let prof = restrict_to_segment(f, xbar, &xbar.add(d))?;
    Ok(prof.right_slope(0.0))
}

/// Same derivative from the active-set formula
/// `min_{active k} max_{active i in k} <a_ki, d>`; no segment profile is built,
/// which makes it the one used in grid sweeps.
pub fn directional_derivative_active(f: &PLFunction, x: &Point, d: &Point) -> Result<ExtReal> {
    x.check_dim(f.dim())?;
    d.check_dim(f.dim())?;
    if !f.in_domain(x) {
        return Err(Error::NotInDomain(x.to_string()));
    }
    Ok(dd_active_unchecked(f, x, d))
}

pub(crate) fn dd_active_unchecked(f: &PLFunction, x: &Point, d: &Point) -> ExtReal {
    if let Some(b) = f.domain() {
        for j in 0..f.dim() {
            let dj = d.get(j);
            if (dj > 0.0 && x.get(j) >= b.upper.get(j)) || (dj < 0.0 && x.get(j) <= b.lower.get(j)) {
                return ExtReal::PosInf;
            }
        }
    }
    let v = f.raw_value(x);
    let tol = activity_tol(v);
    let mut best = f64::INFINITY;
    for comp in f.components() {
        let cv = comp.value(x);
        if cv > v + tol {
            continue;
        }
        let ctol = activity_tol(cv);
        let slope = comp
            .pieces()
            .iter()
            .filter(|p| p.value(x) >= cv - ctol)
            .fold(f64::NEG_INFINITY, |m, p| m.max(p.gradient.dot(d)));
        best = best.min(slope);
    }
    ExtReal::Finite(best)
}

/// Subdifferential at an interior point of `dom f`.
///
/// * one max-affine component: the convex subdifferential, `conv{a_i : i active}`;
/// * 1D, several components: the Clarke set `conv{left slope, right slope}`;
/// * 2D/3D, several active components: `conv` of every active gradient, an outer
///   approximation of the Clarke set (flagged `outer`).
pub fn subdifferential(f: &PLFunction, x: &Point) -> Result<Polytope> {
    x.check_dim(f.dim())?;
    if !f.in_domain(x) {
        return Err(Error::NotInDomain(x.to_string()));
    }
    if !f.in_interior(x) {
        return Err(Error::BoundaryPoint(x.to_string()));
    }
    Ok(subdifferential_unchecked(f, x))
}

pub(crate) fn subdifferential_unchecked(f: &PLFunction, x: &Point) -> Polytope {
    if f.dim() == 1 && !f.is_convex() {
        let right = dd_active_unchecked(f, x, &Point::scalar(1.0)).to_f64();
        let left = -dd_active_unchecked(f, x, &Point::scalar(-1.0)).to_f64();
        return Polytope::hull(vec![Point::scalar(left), Point::scalar(right)])
            .expect("two 1D vertices");
    }
    let v = f.raw_value(x);
    let tol = activity_tol(v);
    let mut grads = Vec::new();
    let mut active_components = 0;
    for comp in f.components() {
        let cv = comp.value(x);
        if cv > v + tol {
            continue;
        }
        active_components += 1;
        let ctol = activity_tol(cv);
        grads.extend(
            comp.pieces()
                .iter()
                .filter(|p| p.value(x) >= cv - ctol)
                .map(|p| p.gradient),
        );
    }
    let mut poly = Polytope::hull(grads).expect("some piece is active");
    poly.outer = active_components > 1;
    poly
}

/// Membership test for `xstar in subdiff f(x)`.
///
/// For convex `f` this checks the defining inequality
/// `<xstar, y - x> + f(x) <= f(y) + tol` on a probe lattice around `x`, without
/// using the hull construction. Otherwise it measures the distance from `xstar`
/// to [`subdifferential`].
pub fn subdiff_contains(f: &PLFunction, x: &Point, xstar: &Point, tol: f64) -> Result<bool> {
    xstar.check_dim(f.dim())?;
    if !f.is_convex() {
        return Ok(subdifferential(f, x)?.contains(xstar, tol));
    }
    x.check_dim(f.dim())?;
    if !f.in_domain(x) {
        return Err(Error::NotInDomain(x.to_string()));
    }
    if !f.in_interior(x) {
        return Err(Error::BoundaryPoint(x.to_string()));
    }
    let fx = f.raw_value(x);
    let window = BoxRegion::ball_inf(x, 1.0)?;
    let window = match f.domain() {
        Some(d) => d.intersect(&window).ok_or(Error::EmptyRegion)?,
        None => window,
    };
    let h = match f.dim() {
        1 => 1.0 / 64.0,
        2 => 1.0 / 32.0,
        _ => 1.0 / 8.0,
    };
    let probes = GridSpec::new(h, window)?.points();
    Ok(probes
        .par_iter()
        .all(|y| xstar.dot(&y.sub(x)) + fx <= f.raw_value(y) + tol))
}

/// Finite enumeration of the enlarged subdifferential with the Euclidean ball.
pub fn eps_enlargement(
    f: &PLFunction,
    xbar: &Point,
    eps: f64,
    grid: &GridSpec,
) -> Result<Vec<SubgradientSample>> {
    eps_enlargement_in(f, xbar, eps, grid, Norm::Euclidean)
}

/// Samples are ordered with `xbar`'s own subgradients first, then by lattice index.
pub fn eps_enlargement_in(
    f: &PLFunction,
    xbar: &Point,
    eps: f64,
    grid: &GridSpec,
    norm: Norm,
) -> Result<Vec<SubgradientSample>> {
    xbar.check_dim(f.dim())?;
    grid.region.lower.check_dim(f.dim())?;
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let fxbar = f.finite_value(xbar)?;
    let bound = eps * (1.0 + 1e-12);
    let admit = |x: &Point| -> Vec<SubgradientSample> {
        if !f.in_interior(x) {
            return Vec::new();
        }
        let shift = x.sub(xbar);
        if norm.of(&shift) > bound {
            return Vec::new();
        }
        let fx = f.raw_value(x);
        if (fx - fxbar).abs() > bound {
            return Vec::new();
        }
        subdifferential_unchecked(f, x)
            .vertices()
            .iter()
            .filter(|v| v.dot(&shift) <= bound)
            .map(|v| SubgradientSample { x: *x, fx, xstar: *v })
            .collect()
    };

    let mut samples = admit(xbar);
    let window = BoxRegion::ball_inf(xbar, eps)?;
    if let Some(window) = window.intersect(&grid.region) {
        let from_grid: Vec<Vec<SubgradientSample>> = grid
            .points_within(&window)
            .par_iter()
            .filter(|x| *x != xbar)
            .map(admit)
            .collect();
        samples.extend(from_grid.into_iter().flatten());
    }
    Ok(samples)
}

/// Sets whose support function `sup <., d>` can be evaluated.
pub trait SupportSet {
    fn sup_pairing(&self, d: &Point) -> Result<f64>;
}

impl SupportSet for [SubgradientSample] {
    fn sup_pairing(&self, d: &Point) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptyInput("no subgradient samples"));
        }
        Ok(self
            .iter()
            .fold(f64::NEG_INFINITY, |m, s| m.max(s.xstar.dot(d))))
    }
}

impl SupportSet for Vec<SubgradientSample> {
    fn sup_pairing(&self, d: &Point) -> Result<f64> {
        self.as_slice().sup_pairing(d)
    }
}

impl SupportSet for Polytope {
    fn sup_pairing(&self, d: &Point) -> Result<f64> {
        Ok(self.support(d))
    }
}

/// `sup <x*, d>` over the samples' subgradients or the polytope's vertices.
pub fn sup_support<S: SupportSet + ?Sized>(set: &S, d: &Point) -> Result<f64> {
    set.sup_pairing(d)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkStep {
    pub eps: f64,
    /// `None` when the enlargement came back empty.
    pub sup: Option<f64>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    pub fprime: ExtReal,
    pub schedule: Vec<LinkStep>,
    pub pass: bool,
    /// `|f'(xbar; d) - s(eps_min)|` for convex `f`.
    pub convex_equal: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Checks `f'(xbar; d) <= sup <enlargement_eps, d> + LINK_TOL` along the schedule.
pub fn verify_link(
    f: &PLFunction,
    xbar: &Point,
    d: &Point,
    eps_schedule: &[f64],
    grid: &GridSpec,
) -> Result<LinkReport> {
    verify_link_in(f, xbar, d, eps_schedule, grid, Norm::Euclidean)
}

pub fn verify_link_in(
    f: &PLFunction,
    xbar: &Point,
    d: &Point,
    eps_schedule: &[f64],
    grid: &GridSpec,
    norm: Norm,
) -> Result<LinkReport> {
    xbar.check_dim(f.dim())?;
    d.check_dim(f.dim())?;
    if !f.in_domain(xbar) {
        return Err(Error::NotInDomain(xbar.to_string()));
    }
    if !f.in_interior(xbar) {
        return Err(Error::BoundaryPoint(xbar.to_string()));
    }
    if d.is_zero() {
        return Err(Error::InvalidArgument("direction must be nonzero".into()));
    }
    if eps_schedule.is_empty()
        || eps_schedule.iter().any(|e| !(*e > 0.0))
        || eps_schedule.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::InvalidArgument(
            "eps schedule must be nonempty, positive and strictly decreasing".into(),
        ));
    }
    let fprime = directional_derivative(f, xbar, d)?;
    let mut steps = Vec::with_capacity(eps_schedule.len());
    let mut pass = true;
    let mut diagnostic = None;
    for &eps in eps_schedule {
        let samples = eps_enlargement_in(f, xbar, eps, grid, norm)?;
        let sup = samples.sup_pairing(d).ok();
        match sup {
            None => {
                pass = false;
                diagnostic.get_or_insert_with(|| {
                    format!("empty enlargement at eps = {eps}; nonemptiness violated")
                });
            }
            Some(s) => {
                if fprime > ExtReal::Finite(s + LINK_TOL) {
                    pass = false;
                    diagnostic.get_or_insert_with(|| {
                        format!("f'(xbar; d) = {fprime} exceeds sup = {s} at eps = {eps}")
                    });
                }
            }
        }
        steps.push(LinkStep {
            eps,
            sup,
            count: samples.len(),
        });
    }
    let convex_equal = match (f.is_convex(), fprime, steps.last().and_then(|s| s.sup)) {
        (true, ExtReal::Finite(fp), Some(s)) => Some((fp - s).abs()),
        _ => None,
    };
    Ok(LinkReport {
        fprime,
        schedule: steps,
        pass,
        convex_equal,
        diagnostic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func_model::AffinePiece;

    fn p(v: f64) -> Point {
        Point::scalar(v)
    }
    fn abs_1d() -> PLFunction {
        PLFunction::max_1d(&[(1.0, 0.0), (-1.0, 0.0)]).unwrap()
    }
    fn two_valleys() -> PLFunction {
        PLFunction::min_max_1d(&[&[(1.0, -1.0), (-1.0, 1.0)], &[(1.0, 1.0), (-1.0, -1.0)]]).unwrap()
    }
    fn max_coords() -> PLFunction {
        PLFunction::max_affine(vec![
            AffinePiece::new(Point::new(&[1.0, 0.0]).unwrap(), 0.0),
            AffinePiece::new(Point::new(&[0.0, 1.0]).unwrap(), 0.0),
        ])
        .unwrap()
    }
    fn line_grid(h: f64, lo: f64, hi: f64) -> GridSpec {
        GridSpec::new(h, BoxRegion::cube(1, lo, hi).unwrap()).unwrap()
    }

    #[test]
    fn dd_examples() {
        assert_eq!(
            directional_derivative(&abs_1d(), &p(0.0), &p(1.0)).unwrap(),
            ExtReal::Finite(1.0)
        );
        let aff = PLFunction::max_1d(&[(3.0, 2.0)]).unwrap();
        assert_eq!(
            directional_derivative(&aff, &p(0.7), &p(-2.0)).unwrap(),
            ExtReal::Finite(-6.0)
        );
    }

    #[test]
    fn dd_of_concave_peak_matches_difference_quotients() {
        let f = two_valleys();
        let f0 = f.raw_value(&p(0.0));
        for k in 5..=20 {
            let t = 0.5f64.powi(k);
            let q = (f.raw_value(&p(t)) - f0) / t;
            assert!((q + 1.0).abs() < 1e-9);
        }
        assert_eq!(
            directional_derivative(&f, &p(0.0), &p(1.0)).unwrap(),
            ExtReal::Finite(-1.0)
        );
        assert_eq!(
            directional_derivative_active(&f, &p(0.0), &p(1.0)).unwrap(),
            ExtReal::Finite(-1.0)
        );
    }

    #[test]
    fn dd_leaving_domain_is_infinite() {
        let f = abs_1d()
            .with_domain(BoxRegion::cube(1, 0.0, 1.0).unwrap())
            .unwrap();
        assert_eq!(
            directional_derivative(&f, &p(1.0), &p(1.0)).unwrap(),
            ExtReal::PosInf
        );
        assert_eq!(
            directional_derivative_active(&f, &p(1.0), &p(1.0)).unwrap(),
            ExtReal::PosInf
        );
        assert_eq!(
            directional_derivative(&f, &p(1.0), &p(-1.0)).unwrap(),
            ExtReal::Finite(-1.0)
        );
        assert!(matches!(
            directional_derivative(&f, &p(2.0), &p(1.0)),
            Err(Error::NotInDomain(_))
        ));
    }

    #[test]
    fn subdifferential_examples() {
        let s = subdifferential(&abs_1d(), &p(0.0)).unwrap();
        assert_eq!(s.vertices(), &[p(-1.0), p(1.0)]);

        let f = PLFunction::max_1d(&[(2.0, 1.0), (-1.0, 0.0)]).unwrap();
        let s = subdifferential(&f, &p(-1.0 / 3.0)).unwrap();
        assert_eq!(s.vertices(), &[p(-1.0), p(2.0)]);

        let s = subdifferential(&max_coords(), &Point::new(&[0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(
            s.vertices(),
            &[Point::new(&[0.0, 1.0]).unwrap(), Point::new(&[1.0, 0.0]).unwrap()]
        );
        assert!(!s.outer);
    }

    #[test]
    fn clarke_set_of_concave_kink() {
        let s = subdifferential(&two_valleys(), &p(0.0)).unwrap();
        assert_eq!(s.vertices(), &[p(-1.0), p(1.0)]);
    }

    #[test]
    fn subdifferential_rejects_boundary() {
        let f = abs_1d()
            .with_domain(BoxRegion::cube(1, 0.0, 1.0).unwrap())
            .unwrap();
        assert!(matches!(subdifferential(&f, &p(1.0)), Err(Error::BoundaryPoint(_))));
        assert!(matches!(subdifferential(&f, &p(1.5)), Err(Error::NotInDomain(_))));
    }

    #[test]
    fn subdiff_contains_examples() {
        assert!(subdiff_contains(&abs_1d(), &p(0.0), &p(0.5), 1e-9).unwrap());
        assert!(!subdiff_contains(&abs_1d(), &p(0.0), &p(2.0), 1e-9).unwrap());
        let f = PLFunction::max_1d(&[(2.0, 1.0), (-1.0, 0.0)]).unwrap();
        assert!(subdiff_contains(&f, &p(0.5), &p(2.0), 1e-9).unwrap());
        assert!(!subdiff_contains(&f, &p(0.5), &p(1.9), 1e-9).unwrap());
    }

    #[test]
    fn enlargement_at_smooth_point() {
        let g = line_grid(0.01, -1.0, 1.0);
        let s = eps_enlargement(&abs_1d(), &p(0.5), 0.1, &g).unwrap();
        assert!(!s.is_empty());
        assert!(s.iter().all(|s| s.xstar == p(1.0)));
    }

    #[test]
    fn enlargement_contains_own_subgradients() {
        let g = line_grid(0.01, -1.0, 1.0);
        for eps in [1.0, 0.1, 1e-3] {
            let s = eps_enlargement(&abs_1d(), &p(0.0), eps, &g).unwrap();
            assert!(s.contains(&SubgradientSample { x: p(0.0), fx: 0.0, xstar: p(-1.0) }));
            assert!(s.contains(&SubgradientSample { x: p(0.0), fx: 0.0, xstar: p(1.0) }));
        }
    }

    #[test]
    fn enlargement_reaches_across_kink() {
        let g = line_grid(0.01, -1.0, 1.0);
        let s = eps_enlargement(&abs_1d(), &p(0.5), 0.75, &g).unwrap();
        assert!(s.contains(&SubgradientSample { x: p(0.0), fx: 0.0, xstar: p(-1.0) }));
        assert_eq!(sup_support(&s, &p(-1.0)).unwrap(), 1.0);
    }

    #[test]
    fn sup_support_examples() {
        let iv = Polytope::new(vec![p(-1.0), p(1.0)]).unwrap();
        assert_eq!(sup_support(&iv, &p(1.0)).unwrap(), 1.0);
        let seg = Polytope::new(vec![
            Point::new(&[1.0, 0.0]).unwrap(),
            Point::new(&[0.0, 1.0]).unwrap(),
        ])
        .unwrap();
        assert_eq!(sup_support(&seg, &Point::new(&[1.0, 1.0]).unwrap()).unwrap(), 1.0);
        let empty: Vec<SubgradientSample> = Vec::new();
        assert!(matches!(sup_support(&empty, &p(1.0)), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn link_examples() {
        let g = line_grid(1.0 / 64.0, -2.0, 2.0);
        let r = verify_link(&abs_1d(), &p(0.0), &p(1.0), &default_schedule(), &g).unwrap();
        assert!(r.pass);
        assert_eq!(r.fprime, ExtReal::Finite(1.0));
        assert!(r.schedule.iter().all(|s| s.sup == Some(1.0)));
        assert_eq!(r.convex_equal, Some(0.0));

        let id = PLFunction::max_1d(&[(1.0, 0.0)]).unwrap();
        let r = verify_link(&id, &p(0.0), &p(1.0), &default_schedule(), &g).unwrap();
        assert!(r.pass);
        assert_eq!(r.convex_equal, Some(0.0));

        let r = verify_link(&two_valleys(), &p(0.0), &p(1.0), &default_schedule(), &g).unwrap();
        assert!(r.pass);
        assert_eq!(r.fprime, ExtReal::Finite(-1.0));
        assert!(r.schedule.iter().all(|s| s.sup.unwrap() >= -1.0));
        assert_eq!(r.convex_equal, None);
    }

    #[test]
    fn link_report_json_shape() {
        let g = line_grid(1.0 / 64.0, -2.0, 2.0);
        let r = verify_link(&abs_1d(), &p(0.0), &p(1.0), &[1.0, 0.5], &g).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for key in ["fprime", "schedule", "pass", "convex_equal"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v["schedule"][0].get("count").is_some());
    }

    #[test]
    fn link_rejects_bad_schedule() {
        let g = line_grid(1.0 / 64.0, -2.0, 2.0);
        assert!(verify_link(&abs_1d(), &p(0.0), &p(1.0), &[0.5, 1.0], &g).is_err());
        assert!(verify_link(&abs_1d(), &p(0.0), &p(0.0), &[1.0], &g).is_err());
    }
}
