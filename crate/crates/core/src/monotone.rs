//! Sampled operator graphs, the monotone polar, and absorbing checks for
//! subdifferential operators.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{subdifferential, subdifferential_unchecked};
use crate::error::{Error, Result};
use crate::func_model::minimize::effective_box;
use crate::func_model::{BoxRegion, PLFunction, Point};
use crate::grid::GridSpec;

/// Tolerance of `<y* - x*, y - x> >= 0` when deciding polar membership.
pub const RELATED_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSample {
    pub x: Point,
    pub xstar: Point,
}

impl GraphSample {
    fn cmp(&self, other: &Self) -> Ordering {
        self.x.lex_cmp(&other.x).then(self.xstar.lex_cmp(&other.xstar))
    }

    /// `<x* - y*, x - y>`.
    pub fn pairing(&self, other: &GraphSample) -> f64 {
        self.xstar.sub(&other.xstar).dot(&self.x.sub(&other.x))
    }

    /// Euclidean distance in `X x X*`.
    pub fn distance(&self, other: &GraphSample) -> f64 {
        let dx = self.x.sub(&other.x).norm();
        let ds = self.xstar.sub(&other.xstar).norm();
        dx.hypot(ds)
    }
}

/// Finite subset of `X x X*`, sorted and free of duplicates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OperatorGraph {
    samples: Vec<GraphSample>,
}

impl OperatorGraph {
    pub fn new(mut samples: Vec<GraphSample>) -> Result<Self> {
        if let Some(first) = samples.first() {
            let n = first.x.dim();
            for s in &samples {
                s.x.check_dim(n)?;
                s.xstar.check_dim(n)?;
            }
        }
        samples.sort_by(GraphSample::cmp);
        samples.dedup();
        Ok(Self { samples })
    }

    pub fn from_pairs(pairs: &[(Point, Point)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(x, xstar)| GraphSample { x, xstar }).collect())
    }

    pub fn samples(&self) -> &[GraphSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Shifts every dual coordinate by `-shift`.
    pub fn translated_dual(&self, shift: &Point) -> Self {
        let mut samples: Vec<GraphSample> = self
            .samples
            .iter()
            .map(|s| GraphSample { x: s.x, xstar: s.xstar.sub(shift) })
            .collect();
        samples.sort_by(GraphSample::cmp);
        Self { samples }
    }

    /// Distance in `X x X*` from `(x, xstar)` to the nearest sample.
    pub fn distance(&self, x: &Point, xstar: &Point) -> f64 {
        let q = GraphSample { x: *x, xstar: *xstar };
        self.samples
            .iter()
            .map(|s| s.distance(&q))
            .fold(f64::INFINITY, f64::min)
    }

    /// CSV with columns `x1..xn,xstar1..xstarn` (`x,xstar` in 1D).
    pub fn to_csv(&self) -> String {
        let n = self.samples.first().map_or(1, |s| s.x.dim());
        let mut out = String::new();
        if n == 1 {
            out.push_str("x,xstar\n");
        } else {
            let cols: Vec<String> = (1..=n)
                .map(|i| format!("x{i}"))
                .chain((1..=n).map(|i| format!("xstar{i}")))
                .collect();
            out.push_str(&cols.join(","));
            out.push('\n');
        }
        for s in &self.samples {
            let row: Vec<String> = s
                .x
                .coords()
                .iter()
                .chain(s.xstar.coords())
                .map(|v| v.to_string())
                .collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

/// `(x, v)` for every lattice point `x` interior to `dom f` and every vertex `v`
/// of the subdifferential there. Breakpoints of 1D functions are added to the lattice.
pub fn sample_subdiff_graph(f: &PLFunction, grid: &GridSpec) -> Result<OperatorGraph> {
    grid.region.lower.check_dim(f.dim())?;
    let window = effective_box(f, &grid.region)?;
    let pts = grid.points_with_kinks(f, &window);
    let samples: Vec<Vec<GraphSample>> = pts
        .par_iter()
        .filter(|x| f.in_interior(x))
        .map(|x| {
            subdifferential_unchecked(f, x)
                .vertices()
                .iter()
                .map(|v| GraphSample { x: *x, xstar: *v })
                .collect()
        })
        .collect();
    OperatorGraph::new(samples.into_iter().flatten().collect())
}

/// `<y* - xstar, y - x> >= -tol` for every sample `(y, y*)`.
pub fn monotonically_related(x: &Point, xstar: &Point, t: &OperatorGraph, tol: f64) -> Result<bool> {
    if xstar.dim() != x.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), got: xstar.dim() });
    }
    if let Some(s) = t.samples.first() {
        x.check_dim(s.x.dim())?;
    }
    Ok(t
        .samples
        .iter()
        .all(|s| s.xstar.sub(xstar).dot(&s.x.sub(x)) >= -tol))
}

/// Dual lattice over `[min slope - 1, max slope + 1]` per coordinate.
pub fn dual_grid_for(f: &PLFunction, h: f64) -> Result<GridSpec> {
    let b = f.gradient_bounds();
    let lo = b.lower.sub(&Point::new(&vec![1.0; f.dim()])?);
    let hi = b.upper.add(&Point::new(&vec![1.0; f.dim()])?);
    GridSpec::new(h, BoxRegion::new(lo, hi)?)
}

/// Candidate pairs `primal x dual` monotonically related to `t`.
///
/// Primal candidates are lattice points strictly inside the primal region plus
/// the sample locations of `t` there. Points on the boundary of the region, or
/// of the bounding box of the samples of `t`, are left out because the truncated
/// graph says nothing about what lies beyond them.
pub fn polar_samples(t: &OperatorGraph, primal: &GridSpec, dual: &GridSpec, tol: f64) -> Result<OperatorGraph> {
    Ok(polar_search(t, primal, dual, tol)?.0)
}

fn polar_search(t: &OperatorGraph, primal: &GridSpec, dual: &GridSpec, tol: f64) -> Result<(OperatorGraph, usize)> {
    if primal.dim() != dual.dim() {
        return Err(Error::DimensionMismatch { expected: primal.dim(), got: dual.dim() });
    }
    let region = primal.region;
    let mut xs: Vec<Point> = primal.points();
    xs.extend(t.samples.iter().map(|s| s.x));
    let hull = sample_bounds(t);
    xs.retain(|x| region.contains_interior(x) && hull.as_ref().is_none_or(|b| inside_spread(b, x)));
    xs.sort_by(Point::lex_cmp);
    xs.dedup();
    let duals = dual.points();
    let tested = xs.len() * duals.len();

    let members: Vec<Vec<GraphSample>> = xs
        .par_iter()
        .map(|x| {
            // Nearby samples are the likeliest to reject a candidate.
            let mut order: Vec<(f64, &GraphSample)> = t
                .samples
                .iter()
                .map(|s| (s.x.sub(x).norm(), s))
                .collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            duals
                .iter()
                .filter(|xstar| {
                    order
                        .iter()
                        .all(|(_, s)| s.xstar.sub(xstar).dot(&s.x.sub(x)) >= -tol)
                })
                .map(|xstar| GraphSample { x: *x, xstar: *xstar })
                .collect()
        })
        .collect();
    Ok((OperatorGraph::new(members.into_iter().flatten().collect())?, tested))
}

/// Bounding box of the primal sample locations.
fn sample_bounds(t: &OperatorGraph) -> Option<BoxRegion> {
    let first = t.samples.first()?.x;
    let (mut lo, mut hi) = (first, first);
    for s in &t.samples {
        for i in 0..first.dim() {
            lo.set(i, lo.get(i).min(s.x.get(i)));
            hi.set(i, hi.get(i).max(s.x.get(i)));
        }
    }
    BoxRegion::new(lo, hi).ok()
}

/// Strictly inside `b` along every axis where `b` has positive width.
fn inside_spread(b: &BoxRegion, x: &Point) -> bool {
    (0..x.dim()).all(|i| {
        let (lo, hi) = (b.lower.get(i), b.upper.get(i));
        lo == hi || (x.get(i) > lo && x.get(i) < hi)
    })
}

/// `<x* - y*, x - y> >= -tol` for all pairs of samples.
pub fn check_monotone(t: &OperatorGraph, tol: f64) -> bool {
    let s = &t.samples;
    (0..s.len())
        .into_par_iter()
        .all(|i| s[i + 1..].iter().all(|q| s[i].pairing(q) >= -tol))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbsorbReport {
    pub candidates_tested: usize,
    pub polar_members: usize,
    /// Polar members `(x, x*)` with `dist(x*, subdiff f(x)) <= tol`.
    pub polar_in_graph: usize,
    /// `max dist(x*, subdiff f(x))` over polar members (0 for an empty polar).
    pub max_violation_distance: f64,
    /// `max` distance in `X x X*` from a polar member to the sampled graph.
    pub max_graph_distance: f64,
    pub graph_samples: usize,
    pub pass: bool,
}

/// Polar of the sampled graph of `subdiff f`, with each member checked against
/// the subdifferential at its base point.
pub fn check_absorbing(f: &PLFunction, grid: &GridSpec, dual_grid: &GridSpec, tol: f64) -> Result<AbsorbReport> {
    let t = sample_subdiff_graph(f, grid)?;
    let (polar, tested) = polar_search(&t, grid, dual_grid, RELATED_TOL)?;
    let dists = polar
        .samples
        .par_iter()
        .map(|m| {
            let d = subdifferential(f, &m.x)?.distance(&m.xstar);
            Ok((d, t.distance(&m.x, &m.xstar)))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let max_violation_distance = dists.iter().map(|d| d.0).fold(0.0, f64::max);
    let max_graph_distance = dists.iter().map(|d| d.1).fold(0.0, f64::max);
    Ok(AbsorbReport {
        candidates_tested: tested,
        polar_members: polar.len(),
        polar_in_graph: dists.iter().filter(|d| d.0 <= tol).count(),
        max_violation_distance,
        max_graph_distance,
        graph_samples: t.len(),
        pass: max_violation_distance <= tol,
    })
}

/// For convex `f`: the sampled graph is monotone and absorbs its polar.
pub fn check_maximal_monotone(f: &PLFunction, grid: &GridSpec, dual_grid: &GridSpec, tol: f64) -> Result<bool> {
    if !f.is_convex() {
        return Err(Error::ConvexityRequired);
    }
    let t = sample_subdiff_graph(f, grid)?;
    Ok(check_monotone(&t, tol) && check_absorbing(f, grid, dual_grid, tol)?.pass)
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
    fn grid1(h: f64) -> GridSpec {
        GridSpec::new(h, BoxRegion::cube(1, -1.0, 1.0).unwrap()).unwrap()
    }
    fn pairs(g: &OperatorGraph) -> Vec<(f64, f64)> {
        g.samples().iter().map(|s| (s.x.get(0), s.xstar.get(0))).collect()
    }

    #[test]
    fn graph_of_abs() {
        let g = sample_subdiff_graph(&abs_1d(), &grid1(0.5)).unwrap();
        assert_eq!(
            pairs(&g),
            vec![(-1.0, -1.0), (-0.5, -1.0), (0.0, -1.0), (0.0, 1.0), (0.5, 1.0), (1.0, 1.0)]
        );
    }

    #[test]
    fn graph_of_affine_and_kinked() {
        let aff = PLFunction::max_1d(&[(3.0, 2.0)]).unwrap();
        let g = sample_subdiff_graph(&aff, &grid1(0.5)).unwrap();
        assert!(g.samples().iter().all(|s| s.xstar == p(3.0)));

        let f = PLFunction::max_1d(&[(2.0, 1.0), (-1.0, 0.0)]).unwrap();
        let g = sample_subdiff_graph(&f, &grid1(0.5)).unwrap();
        for s in g.samples() {
            let x = s.x.get(0);
            let v = s.xstar.get(0);
            if (x + 1.0 / 3.0).abs() < 1e-12 {
                assert!(v == -1.0 || v == 2.0);
            } else if x < -1.0 / 3.0 {
                assert_eq!(v, -1.0);
            } else {
                assert_eq!(v, 2.0);
            }
        }
        assert_eq!(g.samples().iter().filter(|s| (s.x.get(0) + 1.0 / 3.0).abs() < 1e-12).count(), 2);
    }

    #[test]
    fn relatedness_examples() {
        let g = sample_subdiff_graph(&abs_1d(), &grid1(0.25)).unwrap();
        assert!(monotonically_related(&p(0.0), &p(0.5), &g, 0.0).unwrap());
        assert!(!monotonically_related(&p(0.0), &p(2.0), &g, 0.0).unwrap());
        for s in g.samples() {
            assert!(monotonically_related(&s.x, &s.xstar, &g, 0.0).unwrap());
        }
    }

    #[test]
    fn polar_of_abs() {
        let g = sample_subdiff_graph(&abs_1d(), &grid1(0.25)).unwrap();
        let dual = GridSpec::new(0.25, BoxRegion::cube(1, -2.0, 2.0).unwrap()).unwrap();
        let polar = polar_samples(&g, &grid1(0.25), &dual, 1e-9).unwrap();
        assert!(!polar.is_empty());
        for s in polar.samples() {
            let (x, v) = (s.x.get(0), s.xstar.get(0));
            if x == 0.0 {
                assert!((-1.0..=1.0).contains(&v));
            } else {
                assert_eq!(v, x.signum());
            }
        }
        assert_eq!(polar.samples().iter().filter(|s| s.x.get(0) == 0.0).count(), 9);
    }

    #[test]
    fn polar_of_singleton() {
        let t = OperatorGraph::from_pairs(&[(p(0.0), p(0.0))]).unwrap();
        let dual = GridSpec::new(0.5, BoxRegion::cube(1, -1.0, 1.0).unwrap()).unwrap();
        let polar = polar_samples(&t, &grid1(0.5), &dual, 0.0).unwrap();
        assert!(polar.samples().iter().all(|s| s.xstar.dot(&s.x) >= 0.0));
        assert_eq!(polar.len(), 5 + 3 + 3);
    }

    #[test]
    fn polar_of_affine() {
        let aff = PLFunction::max_1d(&[(3.0, 2.0)]).unwrap();
        let g = sample_subdiff_graph(&aff, &grid1(0.25)).unwrap();
        let polar = polar_samples(&g, &grid1(0.25), &dual_grid_for(&aff, 0.25).unwrap(), 1e-9).unwrap();
        assert_eq!(polar.len(), 7);
        assert!(polar.samples().iter().all(|s| s.xstar == p(3.0)));
    }

    #[test]
    fn monotonicity_examples() {
        assert!(check_monotone(&sample_subdiff_graph(&abs_1d(), &grid1(0.25)).unwrap(), 0.0));
        let neg = PLFunction::min_max_1d(&[&[(1.0, 0.0)], &[(-1.0, 0.0)]]).unwrap();
        assert!(!check_monotone(&sample_subdiff_graph(&neg, &grid1(0.25)).unwrap(), 1e-9));
        assert!(check_monotone(&OperatorGraph::default(), 0.0));
    }

    #[test]
    fn absorbing_examples() {
        let r = check_absorbing(&abs_1d(), &grid1(1.0 / 32.0), &dual_grid_for(&abs_1d(), 1.0 / 32.0).unwrap(), 1e-9)
            .unwrap();
        assert!(r.pass);
        assert!(r.polar_members > 0);
        assert_eq!(r.polar_in_graph, r.polar_members);

        let neg = PLFunction::min_max_1d(&[&[(1.0, 0.0)], &[(-1.0, 0.0)]]).unwrap();
        let r = check_absorbing(&neg, &grid1(1.0 / 32.0), &dual_grid_for(&neg, 1.0 / 32.0).unwrap(), 1e-9).unwrap();
        assert!(r.pass);

        let max2 = PLFunction::max_affine(vec![
            AffinePiece::new(Point::new(&[1.0, 0.0]).unwrap(), 0.0),
            AffinePiece::new(Point::new(&[0.0, 1.0]).unwrap(), 0.0),
        ])
        .unwrap();
        let g2 = GridSpec::new(0.25, BoxRegion::cube(2, -1.0, 1.0).unwrap()).unwrap();
        let r = check_absorbing(&max2, &g2, &dual_grid_for(&max2, 0.25).unwrap(), 1e-9).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn maximal_monotone_examples() {
        let h = 1.0 / 32.0;
        for f in [
            abs_1d(),
            PLFunction::max_1d(&[(3.0, 2.0)]).unwrap(),
            PLFunction::max_1d(&[(2.0, 1.0), (-1.0, 0.0)]).unwrap(),
        ] {
            assert!(check_maximal_monotone(&f, &grid1(h), &dual_grid_for(&f, h).unwrap(), 1e-9).unwrap());
        }
        let neg = PLFunction::min_max_1d(&[&[(1.0, 0.0)], &[(-1.0, 0.0)]]).unwrap();
        assert!(matches!(
            check_maximal_monotone(&neg, &grid1(h), &dual_grid_for(&neg, h).unwrap(), 1e-9),
            Err(Error::ConvexityRequired)
        ));
    }

    #[test]
    fn csv_export() {
        let g = sample_subdiff_graph(&abs_1d(), &grid1(1.0)).unwrap();
        assert_eq!(g.to_csv(), "x,xstar\n-1,-1\n0,-1\n0,1\n1,1\n");
    }
}
