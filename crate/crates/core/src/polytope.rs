use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func_model::Point;

/// Convex polytope given by a vertex list (V-representation) in the dual space.
///
/// `outer` marks sets that over-approximate the subdifferential they stand for
/// (active-gradient hulls of nonconvex functions in two or more dimensions).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    vertices: Vec<Point>,
    pub outer: bool,
}

const MERGE_TOL: f64 = 1e-12;

impl Polytope {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        let Some(first) = vertices.first() else {
            return Err(Error::EmptyInput("polytope without vertices"));
        };
        let dim = first.dim();
        for v in &vertices {
            v.check_dim(dim)?;
        }
        Ok(Self {
            vertices,
            outer: false,
        })
    }

    /// Hull of `points` reduced to its extreme points, sorted lexicographically.
    pub fn hull(points: Vec<Point>) -> Result<Self> {
        Ok(Self::new(points)?.canonical())
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].dim()
    }

    pub fn canonical(&self) -> Self {
        let mut pts = self.vertices.clone();
        pts.sort_by(Point::lex_cmp);
        pts.dedup_by(|a, b| a.sub(b).norm_inf() <= MERGE_TOL);
        let vertices = match self.dim() {
            1 => {
                let lo = pts[0];
                let hi = *pts.last().unwrap();
                if lo == hi {
                    vec![lo]
                } else {
                    vec![lo, hi]
                }
            }
            2 => {
                let mut h = monotone_chain(&pts);
                h.sort_by(Point::lex_cmp);
                h
            }
            _ => {
                let keep: Vec<bool> = (0..pts.len())
                    .map(|i| {
                        let others: Vec<Point> = pts
                            .iter()
                            .enumerate()
                            .filter(|(j, _)| *j != i)
                            .map(|(_, p)| *p)
                            .collect();
                        others.is_empty() || hull_distance(&others, &pts[i]) > MERGE_TOL
                    })
                    .collect();
                pts.iter()
                    .zip(keep)
                    .filter(|(_, k)| *k)
                    .map(|(p, _)| *p)
                    .collect()
            }
        };
        Self {
            vertices,
            outer: self.outer,
        }
    }

    /// Support function `max_v <v, d>`.
    pub fn support(&self, d: &Point) -> f64 {
        self.vertices
            .iter()
            .fold(f64::NEG_INFINITY, |m, v| m.max(v.dot(d)))
    }

    /// Euclidean distance from `p` to the polytope.
    pub fn distance(&self, p: &Point) -> f64 {
        if self.dim() == 1 {
            let (lo, hi) = self
                .vertices
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
                    (l.min(v.get(0)), h.max(v.get(0)))
                });
            let x = p.get(0);
            return (lo - x).max(x - hi).max(0.0);
        }
        hull_distance(&self.vertices, p)
    }

    pub fn contains(&self, p: &Point, tol: f64) -> bool {
        self.distance(p) <= tol
    }

    /// `{v - shift}`.
    pub fn translated(&self, shift: &Point) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| v.sub(shift)).collect(),
            outer: self.outer,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| v.scale(c)).collect(),
            outer: self.outer,
        }
    }
}

fn cross(o: &Point, a: &Point, b: &Point) -> f64 {
    (a.get(0) - o.get(0)) * (b.get(1) - o.get(1)) - (a.get(1) - o.get(1)) * (b.get(0) - o.get(0))
}

/// Andrew's monotone chain on lexicographically sorted, deduplicated points.
fn monotone_chain(pts: &[Point]) -> Vec<Point> {
    if pts.len() <= 2 {
        return pts.to_vec();
    }
    let mut lower: Vec<Point> = Vec::new();
    for p in pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= MERGE_TOL {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= MERGE_TOL {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Distance from `p` to `conv(vertices)`: the nearest point lies in the relative
/// interior of a face spanned by at most `n + 1` affinely independent vertices,
/// so projecting onto the affine hull of every small subset and keeping the
/// projections with nonnegative barycentric weights finds it.
fn hull_distance(vertices: &[Point], p: &Point) -> f64 {
    let n = p.dim();
    let k = vertices.len();
    let mut best = vertices
        .iter()
        .map(|v| v.sub(p).norm())
        .fold(f64::INFINITY, f64::min);
    let mut idx = Vec::with_capacity(n + 1);
    for size in 2..=(n + 1).min(k) {
        subsets(k, size, 0, &mut idx, &mut |s| {
            if let Some(d) = face_distance(vertices, s, p) {
                if d < best {
                    best = d;
                }
            }
        });
        if best == 0.0 {
            break;
        }
    }
    best
}

fn subsets(k: usize, size: usize, start: usize, cur: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    if cur.len() == size {
        visit(cur);
        return;
    }
    for i in start..k {
        if k - i < size - cur.len() {
            break;
        }
        cur.push(i);
        subsets(k, size, i + 1, cur, visit);
        cur.pop();
    }
}

fn face_distance(vertices: &[Point], s: &[usize], p: &Point) -> Option<f64> {
    let v0 = vertices[s[0]];
    let edges: Vec<Point> = s[1..].iter().map(|&i| vertices[i].sub(&v0)).collect();
    let m = edges.len();
    let rel = p.sub(&v0);
    let mut a = [[0.0f64; 4]; 3];
    for i in 0..m {
        for j in 0..m {
            a[i][j] = edges[i].dot(&edges[j]);
        }
        a[i][m] = rel.dot(&edges[i]);
    }
    let mu = solve(&mut a, m)?;
    let sum: f64 = mu[..m].iter().sum();
    if mu[..m].iter().any(|&w| w < -1e-12) || 1.0 - sum < -1e-12 {
        return None;
    }
    let mut proj = v0;
    for i in 0..m {
        proj = proj.along(&edges[i], mu[i]);
    }
    Some(proj.sub(p).norm())
}

/// Gaussian elimination with partial pivoting on an `m x (m+1)` augmented system.
fn solve(a: &mut [[f64; 4]; 3], m: usize) -> Option<[f64; 3]> {
    let scale = (0..m).fold(0.0f64, |s, i| s.max(a[i][i].abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .unwrap_or(Ordering::Equal)
        })?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        for r in 0..m {
            if r != col {
                let factor = a[r][col] / a[col][col];
                for c in col..=m {
                    a[r][c] -= factor * a[col][c];
                }
            }
        }
    }
    let mut x = [0.0; 3];
    for i in 0..m {
        x[i] = a[i][m] / a[i][i];
    }
    Some(x)
}
