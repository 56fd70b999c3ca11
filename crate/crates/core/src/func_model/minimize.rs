//! Global minimization of a piecewise-linear function over a box.
//!
//! * 1D: breakpoint enumeration of the segment profile (exact).
//! * 2D: enumeration of the vertices of the kink-line arrangement clipped to the
//!   box. A PL function attains its minimum over a polygon at such a vertex, and
//!   the lexicographically smallest minimizer is one as well, so this is exact.
//! * 3D: lattice minimum followed by exact line searches along coordinate and
//!   diagonal directions until no direction improves.

use rayon::prelude::*;
use serde::Serialize;

use super::segment::{minimize_on_segment, restrict_to_segment, TIE_TOL};
use super::{BoxRegion, ExtReal, PLFunction, Point};
use crate::error::{Error, Result};
use crate::grid::GridSpec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoxMinimum {
    pub point: Point,
    pub value: ExtReal,
}

/// A line `normal . y = rhs` in the plane.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Line {
    pub normal: [f64; 2],
    pub rhs: f64,
}

/// Largest lattice handled by the 3D search before the step is coarsened.
const MAX_LATTICE_3D: usize = 1 << 18;

pub fn minimize_on_box(f: &PLFunction, region: &BoxRegion, grid: &GridSpec) -> Result<BoxMinimum> {
    region.lower.check_dim(f.dim())?;
    let bx = effective_box(f, region)?;
    match f.dim() {
        1 => {
            let m = minimize_on_segment(f, &bx.lower, &bx.upper)?;
            Ok(BoxMinimum {
                point: m.point,
                value: m.value,
            })
        }
        2 => {
            let lines = kink_lines(f);
            let (point, value) = arrangement_minimum(&|y| f.raw_value(y), &lines, &bx);
            Ok(BoxMinimum {
                point,
                value: ExtReal::Finite(value),
            })
        }
        _ => {
            let (point, value) = lattice_then_refine(f, &bx, grid.h)?;
            Ok(BoxMinimum {
                point,
                value: ExtReal::Finite(value),
            })
        }
    }
}

pub(crate) fn effective_box(f: &PLFunction, region: &BoxRegion) -> Result<BoxRegion> {
    match f.domain() {
        None => Ok(*region),
        Some(d) => d.intersect(region).ok_or(Error::EmptyRegion),
    }
}

/// Loci where two pieces of `f` (of any components) tie, in 2D.
pub(crate) fn kink_lines(f: &PLFunction) -> Vec<Line> {
    let pieces: Vec<_> = f.pieces().collect();
    let mut lines = Vec::new();
    for (i, p) in pieces.iter().enumerate() {
        for q in &pieces[i + 1..] {
            let n = [
                p.gradient.get(0) - q.gradient.get(0),
                p.gradient.get(1) - q.gradient.get(1),
            ];
            if n[0] != 0.0 || n[1] != 0.0 {
                lines.push(Line {
                    normal: n,
                    rhs: q.offset - p.offset,
                });
            }
        }
    }
    lines.sort_by(|a, b| {
        a.normal[0]
            .total_cmp(&b.normal[0])
            .then(a.normal[1].total_cmp(&b.normal[1]))
            .then(a.rhs.total_cmp(&b.rhs))
    });
    lines.dedup_by(|a, b| a.normal == b.normal && a.rhs == b.rhs);
    lines
}

fn box_lines(bx: &BoxRegion) -> [Line; 4] {
    [
        Line { normal: [1.0, 0.0], rhs: bx.lower.get(0) },
        Line { normal: [1.0, 0.0], rhs: bx.upper.get(0) },
        Line { normal: [0.0, 1.0], rhs: bx.lower.get(1) },
        Line { normal: [0.0, 1.0], rhs: bx.upper.get(1) },
    ]
}

fn intersect(a: &Line, b: &Line) -> Option<[f64; 2]> {
    let det = a.normal[0] * b.normal[1] - a.normal[1] * b.normal[0];
    let scale = (a.normal[0].abs() + a.normal[1].abs()) * (b.normal[0].abs() + b.normal[1].abs());
    if det.abs() <= 1e-14 * scale {
        return None;
    }
    Some([
        (a.rhs * b.normal[1] - b.rhs * a.normal[1]) / det,
        (a.normal[0] * b.rhs - b.normal[0] * a.rhs) / det,
    ])
}

/// Exact minimum of a PL function over a 2D box given a superset of its kink lines.
/// Ties go to the lexicographically smallest point.
pub(crate) fn arrangement_minimum(
    eval: &(dyn Fn(&Point) -> f64 + Sync),
    kinks: &[Line],
    bx: &BoxRegion,
) -> (Point, f64) {
    let mut lines: Vec<Line> = box_lines(bx).to_vec();
    lines.extend_from_slice(kinks);
    let slack = |j: usize| 1e-9 * (1.0 + bx.lower.get(j).abs().max(bx.upper.get(j).abs()));
    let admit = |c: [f64; 2]| -> Option<Point> {
        let mut p = Point::zeros(2);
        for j in 0..2 {
            let (lo, hi) = (bx.lower.get(j), bx.upper.get(j));
            if c[j] < lo - slack(j) || c[j] > hi + slack(j) || !c[j].is_finite() {
                return None;
            }
            p.set(j, c[j].clamp(lo, hi));
        }
        Some(p)
    };
    let candidates: Vec<(Point, f64)> = (0..lines.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let li = lines[i];
            let lines = &lines;
            (i + 1..lines.len()).filter_map(move |j| {
                let c = intersect(&li, &lines[j])?;
                let p = admit(c)?;
                Some((p, eval(&p)))
            })
        })
        .collect();
    // Corners always come from two box lines, so `candidates` is nonempty.
    pick_minimum(candidates)
}

/// Smallest value; among values within the tie tolerance, smallest point.
pub(crate) fn pick_minimum(candidates: Vec<(Point, f64)>) -> (Point, f64) {
    let best = candidates
        .iter()
        .map(|c| c.1)
        .fold(f64::INFINITY, f64::min);
    let tie = TIE_TOL * (1.0 + best.abs());
    candidates
        .into_iter()
        .filter(|c| c.1 <= best + tie)
        .min_by(|a, b| a.0.lex_cmp(&b.0))
        .expect("at least one candidate")
}

fn lattice_then_refine(f: &PLFunction, bx: &BoxRegion, h: f64) -> Result<(Point, f64)> {
    let mut grid = GridSpec::new(h, *bx)?;
    while grid.len() > MAX_LATTICE_3D {
        grid.h *= 2.0;
    }
    let candidates: Vec<(Point, f64)> = grid
        .points()
        .into_par_iter()
        .map(|p| (p, f.raw_value(&p)))
        .collect();
    let (mut x, mut v) = pick_minimum(candidates);

    let n = f.dim();
    let mut dirs: Vec<Point> = Vec::new();
    for i in 0..n {
        let mut e = Point::zeros(n);
        e.set(i, 1.0);
        dirs.push(e);
        for j in i + 1..n {
            for s in [1.0, -1.0] {
                let mut d = e;
                d.set(j, s);
                dirs.push(d);
            }
        }
    }
    if n == 3 {
        for (a, b) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            dirs.push(Point::new(&[1.0, a, b])?);
        }
    }
    for _ in 0..200 {
        let mut moved = false;
        for d in &dirs {
            let Some((a, b)) = chord(bx, &x, d) else { continue };
            let prof = restrict_to_segment(f, &a, &b)?;
            let m = prof.minimum()?;
            let mv = m.value.to_f64();
            if mv < v - TIE_TOL * (1.0 + v.abs()) {
                x = m.point;
                v = mv;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    Ok((x, v))
}

/// The chord of the box through `x` along `d`.
fn chord(bx: &BoxRegion, x: &Point, d: &Point) -> Option<(Point, Point)> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for j in 0..x.dim() {
        let dj = d.get(j);
        if dj != 0.0 {
            let t1 = (bx.lower.get(j) - x.get(j)) / dj;
            let t2 = (bx.upper.get(j) - x.get(j)) / dj;
            lo = lo.max(t1.min(t2));
            hi = hi.min(t1.max(t2));
        }
    }
    (lo < hi).then(|| (bx.clamp(&x.along(d, lo)), bx.clamp(&x.along(d, hi))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func_model::AffinePiece;

    fn grid_for(bx: &BoxRegion) -> GridSpec {
        GridSpec::default_for(*bx)
    }

    #[test]
    fn abs_minimum_at_zero() {
        let f = PLFunction::max_1d(&[(1.0, 0.0), (-1.0, 0.0)]).unwrap();
        let bx = BoxRegion::cube(1, -1.0, 1.0).unwrap();
        let m = minimize_on_box(&f, &bx, &grid_for(&bx)).unwrap();
        assert_eq!(m.point.get(0), 0.0);
        assert_eq!(m.value, ExtReal::Finite(0.0));
    }

    #[test]
    fn two_valleys_tie_breaks_left() {
        let f = PLFunction::min_max_1d(&[&[(1.0, -1.0), (-1.0, 1.0)], &[(1.0, 1.0), (-1.0, -1.0)]])
            .unwrap();
        let bx = BoxRegion::cube(1, -3.0, 3.0).unwrap();
        let m = minimize_on_box(&f, &bx, &grid_for(&bx)).unwrap();
        assert_eq!(m.point.get(0), -1.0);
        assert_eq!(m.value, ExtReal::Finite(0.0));
    }

    #[test]
    fn max_of_coordinates_minimum_at_corner() {
        let f = PLFunction::max_affine(vec![
            AffinePiece::new(Point::new(&[1.0, 0.0]).unwrap(), 0.0),
            AffinePiece::new(Point::new(&[0.0, 1.0]).unwrap(), 0.0),
        ])
        .unwrap();
        let bx = BoxRegion::cube(2, -1.0, 1.0).unwrap();
        let m = minimize_on_box(&f, &bx, &grid_for(&bx)).unwrap();
        assert_eq!(m.point, Point::new(&[-1.0, -1.0]).unwrap());
        assert_eq!(m.value, ExtReal::Finite(-1.0));
    }

    #[test]
    fn interior_vertex_in_2d() {
        // |x1 - 0.3| + |x2 + 0.2| expanded into four pieces.
        let mut pieces = Vec::new();
        for s1 in [1.0, -1.0] {
            for s2 in [1.0, -1.0] {
                pieces.push(AffinePiece::new(
                    Point::new(&[s1, s2]).unwrap(),
                    -0.3 * s1 + 0.2 * s2,
                ));
            }
        }
        let f = PLFunction::max_affine(pieces).unwrap();
        let bx = BoxRegion::cube(2, -1.0, 1.0).unwrap();
        let m = minimize_on_box(&f, &bx, &grid_for(&bx)).unwrap();
        assert!((m.point.get(0) - 0.3).abs() < 1e-12);
        assert!((m.point.get(1) + 0.2).abs() < 1e-12);
        assert!(m.value.to_f64().abs() < 1e-12);
    }

    #[test]
    fn three_dimensional_refinement_finds_kink() {
        // max over +-x_i - c_i: minimum 0 at (0.3, -0.1, 0.05), off the lattice.
        let c = [0.3, -0.1, 0.05];
        let mut pieces = Vec::new();
        for i in 0..3 {
            for s in [1.0, -1.0] {
                let mut g = Point::zeros(3);
                g.set(i, s);
                pieces.push(AffinePiece::new(g, -s * c[i]));
            }
        }
        let f = PLFunction::max_affine(pieces).unwrap();
        let bx = BoxRegion::cube(3, -1.0, 1.0).unwrap();
        let m = minimize_on_box(&f, &bx, &GridSpec::new(0.25, bx).unwrap()).unwrap();
        assert!(m.value.to_f64().abs() < 1e-12, "{:?}", m);
    }

    #[test]
    fn region_outside_domain_is_an_error() {
        let f = PLFunction::max_1d(&[(1.0, 0.0)])
            .unwrap()
            .with_domain(BoxRegion::cube(1, 0.0, 1.0).unwrap())
            .unwrap();
        let bx = BoxRegion::cube(1, 2.0, 3.0).unwrap();
        assert_eq!(
            minimize_on_box(&f, &bx, &grid_for(&bx)).unwrap_err(),
            Error::EmptyRegion
        );
    }
}
