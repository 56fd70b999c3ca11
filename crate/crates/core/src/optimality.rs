//! First-order optimality tests on a box, checked against brute-force minimization.
//!
//! Two characterizations of "`xbar` minimizes `f` over the region" are swept on a
//! lattice of points `y` with `f(y) < f(xbar)`:
//!
//! * [`directional_test`]: no such `y` has `f'(y; xbar - y) > 0`;
//! * [`subdiff_test`]: no such `y` has `sup <subdiff f(y), xbar - y> > 0`.
//!
//! When `xbar` is not a minimizer, [`refute_optimality`] constructs a point
//! `y_eps` with `f(y_eps) < f(xbar)` and a subgradient `y*` there with
//! `<y*, xbar - y_eps> > 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{dd_active_unchecked, directional_derivative, subdifferential_unchecked};
use crate::error::{Error, Result};
use crate::func_model::minimize::effective_box;
use crate::func_model::{minimize_on_box, BoxMinimum, BoxRegion, ExtReal, PLFunction, Point};
use crate::grid::GridSpec;
use crate::variational::{find_enlarged_subgradient, mean_value_witness};

/// Separates violations from numerical noise.
pub const OPT_TOL: f64 = 1e-7;
/// Closest calls within this many tolerances of a threshold make a verdict inconclusive.
pub const NEAR_FACTOR: f64 = 10.0;
/// Violations listed in a report; the total is in `violation_count`.
pub const MAX_LISTED: usize = 100;

const REFINE_RETRIES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    OptimalCertified,
    NotOptimal,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub y: Point,
    pub fy: f64,
    /// `f'(y; xbar - y)` or `sup <subdiff f(y), xbar - y>`.
    pub evidence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub verdict: Verdict,
    pub checked_points: usize,
    pub violations: Vec<Violation>,
    pub violation_count: usize,
    pub near_calls: usize,
    pub f_xbar: f64,
    pub brute_force_min: bool,
    pub brute_force_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefutationWitness {
    pub y_eps: Point,
    pub ystar_eps: Point,
    pub f_yeps: f64,
    /// `<y*_eps, xbar - y_eps>`.
    pub inner: f64,
    pub f_xbar: f64,
    /// Point with `f(x) < f(xbar)` the construction started from.
    pub x: Point,
    /// Mean value point on `[x, xbar)`.
    pub x0: Point,
    pub lambda: f64,
    pub eps: f64,
    pub grid_h: f64,
}

impl RefutationWitness {
    pub fn is_valid(&self, tol: f64) -> bool {
        self.f_yeps < self.f_xbar - tol && self.inner > tol
    }
}

fn check_anchor(f: &PLFunction, region: &BoxRegion, xbar: &Point) -> Result<f64> {
    xbar.check_dim(f.dim())?;
    region.lower.check_dim(f.dim())?;
    if !region.contains(xbar) {
        return Err(Error::InvalidArgument(format!("{xbar} lies outside the region")));
    }
    f.finite_value(xbar)
}

/// Exact (1D/2D) or refined-lattice (3D) minimum of `f` over `region`.
pub fn brute_force_minimum(f: &PLFunction, region: &BoxRegion, grid: &GridSpec) -> Result<BoxMinimum> {
    minimize_on_box(f, region, grid)
}

/// `min_region f >= f(xbar) - OPT_TOL`.
pub fn brute_force_is_min(f: &PLFunction, region: &BoxRegion, xbar: &Point, grid: &GridSpec) -> Result<bool> {
    let fx = check_anchor(f, region, xbar)?;
    let m = brute_force_minimum(f, region, grid)?;
    Ok(m.value.to_f64() >= fx - OPT_TOL)
}

/// Outcome at one sweep point: a violation, a near call, or nothing.
enum Probe {
    Clear,
    Near,
    Violation(Violation),
}

fn classify(y: &Point, xbar: &Point, fy: f64, f_xbar: f64, evidence: f64) -> Probe {
    let lower = fy < f_xbar - OPT_TOL;
    let rising = evidence > OPT_TOL;
    match (lower, rising) {
        (true, true) => Probe::Violation(Violation { y: *y, fy, evidence }),
        _ if y == xbar => Probe::Clear,
        (false, true) if fy - (f_xbar - OPT_TOL) <= NEAR_FACTOR * OPT_TOL => Probe::Near,
        (true, false) if OPT_TOL - evidence <= NEAR_FACTOR * OPT_TOL => Probe::Near,
        _ => Probe::Clear,
    }
}

fn sweep(
    f: &PLFunction,
    region: &BoxRegion,
    xbar: &Point,
    grid: &GridSpec,
    f_xbar: f64,
    points: Vec<Point>,
    evidence: impl Fn(&Point) -> f64 + Sync,
) -> Result<TestReport> {
    let probes: Vec<Probe> = points
        .par_iter()
        .map(|y| classify(y, xbar, f.raw_value(y), f_xbar, evidence(y)))
        .collect();
    let mut violations = Vec::new();
    let mut violation_count = 0;
    let mut near_calls = 0;
    for p in probes {
        match p {
            Probe::Clear => {}
            Probe::Near => near_calls += 1,
            Probe::Violation(v) => {
                violation_count += 1;
                if violations.len() < MAX_LISTED {
                    violations.push(v);
                }
            }
        }
    }
    let m = brute_force_minimum(f, region, grid)?;
    let brute_force_value = m.value.to_f64();
    let brute_force_min = brute_force_value >= f_xbar - OPT_TOL;
    let verdict = if violation_count > 0 {
        Verdict::NotOptimal
    } else if near_calls == 0 && brute_force_min {
        Verdict::OptimalCertified
    } else {
        Verdict::Inconclusive
    };
    Ok(TestReport {
        verdict,
        checked_points: points.len(),
        violations,
        violation_count,
        near_calls,
        f_xbar,
        brute_force_min,
        brute_force_value,
    })
}

/// Closed sweep set: lattice points of `C ∩ dom f` (plus kinks in 1D).
fn closed_points(f: &PLFunction, c: &BoxRegion, xbar: &Point, grid: &GridSpec) -> Result<Vec<Point>> {
    let window = effective_box(f, c)?;
    Ok(with_midpoints(grid.points_with_kinks(f, &window), &window, xbar))
}

/// Open sweep set: lattice points of `int U ∩ int dom f` (plus kinks in 1D).
fn open_points(f: &PLFunction, u: &BoxRegion, xbar: &Point, grid: &GridSpec) -> Result<Vec<Point>> {
    let window = effective_box(f, u)?;
    let mut pts = with_midpoints(grid.points_with_kinks(f, &window), &window, xbar);
    pts.retain(|y| u.contains_interior(y) && f.in_interior(y));
    Ok(pts)
}

/// In 1D, adds the window ends, `xbar` and the midpoint of every pair of
/// neighbours, so each open piece between kinks and lattice points is sampled.
fn with_midpoints(mut pts: Vec<Point>, window: &BoxRegion, xbar: &Point) -> Vec<Point> {
    if window.dim() != 1 {
        return pts;
    }
    pts.extend([window.lower, window.upper]);
    if window.contains(xbar) {
        pts.push(*xbar);
    }
    pts.sort_by(Point::lex_cmp);
    pts.dedup_by(|a, b| (a.get(0) - b.get(0)).abs() <= 1e-12);
    let mids: Vec<Point> = pts
        .windows(2)
        .map(|w| Point::scalar(0.5 * (w[0].get(0) + w[1].get(0))))
        .collect();
    pts.extend(mids);
    pts.sort_by(Point::lex_cmp);
    pts
}

fn check_open_anchor(f: &PLFunction, u: &BoxRegion, xbar: &Point) -> Result<f64> {
    let fx = check_anchor(f, u, xbar)?;
    if !u.contains_interior(xbar) || !f.in_interior(xbar) {
        return Err(Error::BoundaryPoint(xbar.to_string()));
    }
    Ok(fx)
}

/// Sweeps `y` over the lattice in `C` (boundary included) for
/// `f(y) < f(xbar)` together with `f'(y; xbar - y) > 0`.
pub fn directional_test(f: &PLFunction, c: &BoxRegion, xbar: &Point, grid: &GridSpec) -> Result<TestReport> {
    let f_xbar = check_anchor(f, c, xbar)?;
    let points = closed_points(f, c, xbar, grid)?;
    sweep(f, c, xbar, grid, f_xbar, points, |y| {
        dd_active_unchecked(f, y, &xbar.sub(y)).to_f64()
    })
}

/// `f'(y; xbar - y) <= OPT_TOL` at every lattice point of `C`, a sufficient
/// condition for `xbar` to minimize `f` over `C`.
pub fn minty_sufficient(f: &PLFunction, c: &BoxRegion, xbar: &Point, grid: &GridSpec) -> Result<bool> {
    check_anchor(f, c, xbar)?;
    let points = closed_points(f, c, xbar, grid)?;
    Ok(points
        .par_iter()
        .all(|y| dd_active_unchecked(f, y, &xbar.sub(y)).to_f64() <= OPT_TOL))
}

/// Sweeps `y` over lattice points interior to `U` for `f(y) < f(xbar)` together
/// with `sup <subdiff f(y), xbar - y> > 0`.
pub fn subdiff_test(f: &PLFunction, u: &BoxRegion, xbar: &Point, grid: &GridSpec) -> Result<TestReport> {
    let f_xbar = check_open_anchor(f, u, xbar)?;
    let points = open_points(f, u, xbar, grid)?;
    sweep(f, u, xbar, grid, f_xbar, points, |y| {
        subdifferential_unchecked(f, y).support(&xbar.sub(y))
    })
}

/// `sup <subdiff f(y), xbar - y> <= OPT_TOL` at every interior lattice point of `U`.
pub fn subdiff_sufficient(f: &PLFunction, u: &BoxRegion, xbar: &Point, grid: &GridSpec) -> Result<bool> {
    check_open_anchor(f, u, xbar)?;
    let points = open_points(f, u, xbar, grid)?;
    Ok(points
        .par_iter()
        .all(|y| subdifferential_unchecked(f, y).support(&xbar.sub(y)) <= OPT_TOL))
}

/// Builds `(y_eps, y*_eps)` with `f(y_eps) < f(xbar)` and `<y*_eps, xbar - y_eps> > 0`.
///
/// 1. `x` = brute-force minimizer over `U`, pulled toward `xbar` into the open
///    box until `f(x) <= (f(x) + f(xbar)) / 2` at the original `x`;
/// 2. mean value point `x0` on `[x, xbar)` with `lambda = (f(xbar) - f(x)) / 2`;
/// 3. `eps = 0.9 min(depth of x0 in U, f(xbar) - f(x0), f'(x0; xbar - x0))`;
/// 4. a sample of the `eps`-enlargement at `x0` pairing at least `eps` with `xbar - x0`.
///
/// Step 4 is repeated on a refined lattice up to three times.
pub fn refute_optimality(f: &PLFunction, u: &BoxRegion, xbar: &Point, grid: &GridSpec) -> Result<RefutationWitness> {
    let f_xbar = check_anchor(f, u, xbar)?;
    let m = brute_force_minimum(f, u, grid)?;
    let f_min = m.value.to_f64();
    if f_min >= f_xbar - OPT_TOL {
        return Err(Error::IsActuallyOptimal);
    }
    let open = effective_box(f, u)?;
    let anchor = if open.contains_interior(xbar) { *xbar } else { open.center() };
    let target = 0.5 * (f_min + f_xbar);
    let mut x = m.point;
    if !open.contains_interior(&x) {
        let mut theta = 0.5;
        loop {
            let cand = x.along(&anchor.sub(&x), theta);
            if open.contains_interior(&cand) && f.raw_value(&cand) <= target {
                x = cand;
                break;
            }
            theta *= 0.5;
            if theta < 1e-15 {
                return Err(Error::RefutationFailed(
                    "could not move the minimizer into the open region".into(),
                ));
            }
        }
    }
    let f_x = f.raw_value(&x);
    let lambda = 0.5 * (f_xbar - f_x);
    let mvw = mean_value_witness(f, &x, xbar, lambda)?;
    let x0 = mvw.x0;
    let d = xbar.sub(&x0);
    let slope = match directional_derivative(f, &x0, &d)? {
        ExtReal::Finite(v) => v,
        ExtReal::PosInf => f64::INFINITY,
    };
    let eps = 0.9 * open.depth(&x0).min(f_xbar - mvw.f_x0).min(slope);
    if !(eps > 0.0) {
        return Err(Error::RefutationFailed(format!(
            "no admissible eps at x0 = {x0} (depth {}, gap {}, slope {slope})",
            open.depth(&x0),
            f_xbar - mvw.f_x0
        )));
    }

    let mut g = *grid;
    let mut last = String::new();
    for _ in 0..=REFINE_RETRIES {
        match find_enlarged_subgradient(f, &x0, &d, eps, eps, &g) {
            Ok(s) => {
                let w = RefutationWitness {
                    y_eps: s.x,
                    ystar_eps: s.xstar,
                    f_yeps: s.fx,
                    inner: s.xstar.dot(&xbar.sub(&s.x)),
                    f_xbar,
                    x,
                    x0,
                    lambda,
                    eps,
                    grid_h: g.h,
                };
                if w.is_valid(OPT_TOL) && u.contains_interior(&w.y_eps) {
                    return Ok(w);
                }
                last = format!("candidate at {} failed the witness checks", w.y_eps);
            }
            Err(e) => last = e.to_string(),
        }
        g = g.refined();
    }
    Err(Error::RefutationFailed(last))
}
