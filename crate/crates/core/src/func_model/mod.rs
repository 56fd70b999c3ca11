//! Exact representation of proper lower semicontinuous piecewise-linear functions
//! on `R^n`, `n <= 3`.
//!
//! A [`PLFunction`] is a pointwise minimum of [`MaxAffine`] components, optionally
//! restricted to a closed [`BoxRegion`] outside of which it is `+inf`. Every
//! restriction to a segment is piecewise affine with finitely many breakpoints,
//! which is what makes the one-dimensional computations in [`segment`] exact.

pub(crate) mod minimize;
mod segment;

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use minimize::{minimize_on_box, BoxMinimum};
pub use segment::{minimize_on_segment, restrict_to_segment, SegmentMinimum, SegmentProfile};

pub const MAX_DIM: usize = 3;

/// Relative tolerance used to decide whether an affine piece is active.
pub const ACTIVITY_TOL: f64 = 1e-9;

/// Activity threshold at a point where `f` takes the value `value`.
#[inline]
pub fn activity_tol(value: f64) -> f64 {
    ACTIVITY_TOL * (1.0 + value.abs())
}

/// A point of `R^n` (or of its dual), `1 <= n <= 3`.
#[derive(Clone, Copy, PartialEq)]
pub struct Point {
    c: [f64; MAX_DIM],
    dim: u8,
}

impl Point {
    pub fn new(coords: &[f64]) -> Result<Self> {
        let dim = coords.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::UnsupportedDimension(dim));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite coordinate in {coords:?}"
            )));
        }
        let mut c = [0.0; MAX_DIM];
        c[..dim].copy_from_slice(coords);
        Ok(Self { c, dim: dim as u8 })
    }

    /// One-dimensional point.
    pub fn scalar(v: f64) -> Self {
        let mut c = [0.0; MAX_DIM];
        c[0] = v;
        Self { c, dim: 1 }
    }

    pub fn zeros(dim: usize) -> Self {
        debug_assert!((1..=MAX_DIM).contains(&dim));
        Self {
            c: [0.0; MAX_DIM],
            dim: dim as u8,
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[f64] {
        &self.c[..self.dim as usize]
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.c[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: f64) {
        self.c[i] = v;
    }

    #[inline]
    pub fn dot(&self, other: &Point) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim() {
            s += self.c[i] * other.c[i];
        }
        s
    }

    #[inline]
    pub fn add(&self, other: &Point) -> Point {
        self.zip(other, |a, b| a + b)
    }

    #[inline]
    pub fn sub(&self, other: &Point) -> Point {
        self.zip(other, |a, b| a - b)
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Point {
        let mut out = *self;
        for i in 0..self.dim() {
            out.c[i] *= s;
        }
        out
    }

    /// `self + t * dir`.
    #[inline]
    pub fn along(&self, dir: &Point, t: f64) -> Point {
        self.zip(dir, |a, b| a + t * b)
    }

    #[inline]
    fn zip(&self, other: &Point, op: impl Fn(f64, f64) -> f64) -> Point {
        let mut out = *self;
        for i in 0..self.dim() {
            out.c[i] = op(self.c[i], other.c[i]);
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.coords().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.coords().iter().all(|v| *v == 0.0)
    }

    /// Lexicographic comparison of coordinates.
    pub fn lex_cmp(&self, other: &Point) -> Ordering {
        for i in 0..self.dim().min(other.dim()) {
            match self.c[i].total_cmp(&other.c[i]) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        self.dim.cmp(&other.dim)
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Point::new(&v).map_err(serde::de::Error::custom)
    }
}

/// A value in `]-inf, +inf]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
}

impl ExtReal {
    #[inline]
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    #[inline]
    pub fn finite(&self) -> Option<f64> {
        match *self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::PosInf => None,
        }
    }

    /// `+inf` absorbs finite summands.
    #[inline]
    pub fn add(self, v: f64) -> ExtReal {
        match self {
            ExtReal::Finite(a) => ExtReal::Finite(a + v),
            ExtReal::PosInf => ExtReal::PosInf,
        }
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        if other < self {
            other
        } else {
            self
        }
    }

    /// Finite value, or `f64::INFINITY` for `+inf`.
    #[inline]
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.partial_cmp(b),
            (ExtReal::Finite(_), ExtReal::PosInf) => Some(Ordering::Less),
            (ExtReal::PosInf, ExtReal::Finite(_)) => Some(Ordering::Greater),
            (ExtReal::PosInf, ExtReal::PosInf) => Some(Ordering::Equal),
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInf => write!(f, "+inf"),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => s.serialize_f64(*v),
            ExtReal::PosInf => s.serialize_str("+inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(ExtReal::Finite)
                .ok_or_else(|| serde::de::Error::custom("bad number")),
            serde_json::Value::String(s) if s == "+inf" => Ok(ExtReal::PosInf),
            other => Err(serde::de::Error::custom(format!(
                "expected number or \"+inf\", got {other}"
            ))),
        }
    }
}

/// `x -> <gradient, x> + offset`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub gradient: Point,
    pub offset: f64,
}

impl AffinePiece {
    pub fn new(gradient: Point, offset: f64) -> Self {
        Self { gradient, offset }
    }

    #[inline]
    pub fn value(&self, x: &Point) -> f64 {
        self.gradient.dot(x) + self.offset
    }
}

/// Pointwise maximum of a nonempty list of affine pieces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxAffine {
    pieces: Vec<AffinePiece>,
}

impl MaxAffine {
    pub fn new(pieces: Vec<AffinePiece>) -> Result<Self> {
        let Some(first) = pieces.first() else {
            return Err(Error::EmptyInput("max-affine component without pieces"));
        };
        let dim = first.gradient.dim();
        for p in &pieces {
            p.gradient.check_dim(dim)?;
            if !p.offset.is_finite() {
                return Err(Error::InvalidArgument("non-finite offset".into()));
            }
        }
        Ok(Self { pieces })
    }

    pub fn pieces(&self) -> &[AffinePiece] {
        &self.pieces
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].gradient.dim()
    }

    #[inline]
    pub fn value(&self, x: &Point) -> f64 {
        self.pieces
            .iter()
            .fold(f64::NEG_INFINITY, |m, p| m.max(p.value(x)))
    }

    /// Global Lipschitz constant `max |a_i|`.
    pub fn lipschitz(&self) -> f64 {
        self.pieces
            .iter()
            .fold(0.0, |m, p| m.max(p.gradient.norm()))
    }
}

/// Closed, nonempty axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lower: Point,
    pub upper: Point,
}

impl BoxRegion {
    pub fn new(lower: Point, upper: Point) -> Result<Self> {
        lower.check_dim(upper.dim())?;
        for i in 0..lower.dim() {
            if lower.get(i) > upper.get(i) {
                return Err(Error::InvalidArgument(format!(
                    "box bounds out of order on axis {i}: {} > {}",
                    lower.get(i),
                    upper.get(i)
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(Point::new(&vec![lo; dim])?, Point::new(&vec![hi; dim])?)
    }

    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self> {
        let lo: Vec<f64> = bounds.iter().map(|b| b.0).collect();
        let hi: Vec<f64> = bounds.iter().map(|b| b.1).collect();
        Self::new(Point::new(&lo)?, Point::new(&hi)?)
    }

    /// Sup-norm ball `center + radius * [-1, 1]^n`.
    pub fn ball_inf(center: &Point, radius: f64) -> Result<Self> {
        let r = Point::new(&vec![radius.abs(); center.dim()])?;
        Self::new(center.sub(&r), center.add(&r))
    }

    pub fn dim(&self) -> usize {
        self.lower.dim()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper.get(axis) - self.lower.get(axis)
    }

    pub fn max_width(&self) -> f64 {
        (0..self.dim()).fold(0.0, |m, i| m.max(self.width(i)))
    }

    pub fn center(&self) -> Point {
        self.lower.add(&self.upper).scale(0.5)
    }

    #[inline]
    pub fn contains(&self, x: &Point) -> bool {
        (0..self.dim()).all(|i| self.lower.get(i) <= x.get(i) && x.get(i) <= self.upper.get(i))
    }

    #[inline]
    pub fn contains_interior(&self, x: &Point) -> bool {
        (0..self.dim()).all(|i| self.lower.get(i) < x.get(i) && x.get(i) < self.upper.get(i))
    }

    /// Distance from `x` to the complement of the box (0 when `x` is outside).
    pub fn depth(&self, x: &Point) -> f64 {
        (0..self.dim()).fold(f64::INFINITY, |m, i| {
            m.min(x.get(i) - self.lower.get(i))
                .min(self.upper.get(i) - x.get(i))
        })
        .max(0.0)
    }

    pub fn intersect(&self, other: &BoxRegion) -> Option<BoxRegion> {
        if self.dim() != other.dim() {
            return None;
        }
        let mut lo = self.lower;
        let mut hi = self.upper;
        for i in 0..self.dim() {
            lo.set(i, lo.get(i).max(other.lower.get(i)));
            hi.set(i, hi.get(i).min(other.upper.get(i)));
            if lo.get(i) > hi.get(i) {
                return None;
            }
        }
        Some(BoxRegion {
            lower: lo,
            upper: hi,
        })
    }

    /// Nearest point of the box.
    pub fn clamp(&self, x: &Point) -> Point {
        let mut out = *x;
        for i in 0..self.dim() {
            out.set(i, x.get(i).clamp(self.lower.get(i), self.upper.get(i)));
        }
        out
    }

    pub fn corners(&self) -> Vec<Point> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| {
                let mut p = self.lower;
                for i in 0..n {
                    if mask & (1 << i) != 0 {
                        p.set(i, self.upper.get(i));
                    }
                }
                p
            })
            .collect()
    }
}

/// `f(x) = min_k max_i <a_ki, x> + b_ki` on `domain`, `+inf` outside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PLFunction {
    dim: usize,
    components: Vec<MaxAffine>,
    domain: Option<BoxRegion>,
}

impl PLFunction {
    pub fn new(components: Vec<MaxAffine>, domain: Option<BoxRegion>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::EmptyInput("function without components"));
        };
        let dim = first.dim();
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        for c in &components {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.dim(),
                });
            }
        }
        if let Some(b) = &domain {
            b.lower.check_dim(dim)?;
        }
        Ok(Self {
            dim,
            components,
            domain,
        })
    }

    /// Convex function `max_i <a_i, x> + b_i`.
    pub fn max_affine(pieces: Vec<AffinePiece>) -> Result<Self> {
        Self::new(vec![MaxAffine::new(pieces)?], None)
    }

    pub fn affine(gradient: Point, offset: f64) -> Result<Self> {
        Self::max_affine(vec![AffinePiece::new(gradient, offset)])
    }

    /// 1D shorthand: `max_i (slope_i * x + offset_i)`.
    pub fn max_1d(pieces: &[(f64, f64)]) -> Result<Self> {
        Self::max_affine(
            pieces
                .iter()
                .map(|&(a, b)| AffinePiece::new(Point::scalar(a), b))
                .collect(),
        )
    }

    /// 1D shorthand: `min_k max_i (slope * x + offset)`.
    pub fn min_max_1d(components: &[&[(f64, f64)]]) -> Result<Self> {
        let comps = components
            .iter()
            .map(|c| {
                MaxAffine::new(
                    c.iter()
                        .map(|&(a, b)| AffinePiece::new(Point::scalar(a), b))
                        .collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(comps, None)
    }

    pub fn with_domain(mut self, domain: BoxRegion) -> Result<Self> {
        domain.lower.check_dim(self.dim)?;
        self.domain = Some(domain);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[MaxAffine] {
        &self.components
    }

    pub fn domain(&self) -> Option<&BoxRegion> {
        self.domain.as_ref()
    }

    /// Single max-affine component.
    pub fn is_convex(&self) -> bool {
        self.components.len() == 1
    }

    pub fn pieces(&self) -> impl Iterator<Item = &AffinePiece> {
        self.components.iter().flat_map(|c| c.pieces.iter())
    }

    pub fn piece_count(&self) -> usize {
        self.components.iter().map(|c| c.pieces.len()).sum()
    }

    pub fn lipschitz(&self) -> f64 {
        self.components
            .iter()
            .fold(0.0, |m, c| m.max(c.lipschitz()))
    }

    /// Smallest box containing every piece gradient, i.e. every subgradient.
    pub fn gradient_bounds(&self) -> BoxRegion {
        let first = self.components[0].pieces[0].gradient;
        let (mut lo, mut hi) = (first, first);
        for p in self.pieces() {
            for i in 0..self.dim {
                lo.set(i, lo.get(i).min(p.gradient.get(i)));
                hi.set(i, hi.get(i).max(p.gradient.get(i)));
            }
        }
        BoxRegion {
            lower: lo,
            upper: hi,
        }
    }

    #[inline]
    pub fn in_domain(&self, x: &Point) -> bool {
        self.domain.as_ref().is_none_or(|b| b.contains(x))
    }

    #[inline]
    pub fn in_interior(&self, x: &Point) -> bool {
        self.domain.as_ref().is_none_or(|b| b.contains_interior(x))
    }

    /// Value of the min-max formula, ignoring the domain.
    #[inline]
    pub fn raw_value(&self, x: &Point) -> f64 {
        self.components
            .iter()
            .fold(f64::INFINITY, |m, c| m.min(c.value(x)))
    }

    pub fn evaluate(&self, x: &Point) -> Result<ExtReal> {
        x.check_dim(self.dim)?;
        Ok(self.value(x))
    }

    /// [`evaluate`](Self::evaluate) without the dimension check.
    #[inline]
    pub fn value(&self, x: &Point) -> ExtReal {
        if self.in_domain(x) {
            ExtReal::Finite(self.raw_value(x))
        } else {
            ExtReal::PosInf
        }
    }

    /// Finite value at a point of the domain, error otherwise.
    pub fn finite_value(&self, x: &Point) -> Result<f64> {
        self.evaluate(x)?
            .finite()
            .ok_or_else(|| Error::NotInDomain(x.to_string()))
    }

    /// `f - <xstar, .>`.
    pub fn minus_linear(&self, xstar: &Point) -> Result<Self> {
        xstar.check_dim(self.dim)?;
        self.map_pieces(|p| AffinePiece::new(p.gradient.sub(xstar), p.offset))
    }

    /// `c * f` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scale factor must be positive, got {c}"
            )));
        }
        self.map_pieces(|p| AffinePiece::new(p.gradient.scale(c), p.offset * c))
    }

    fn map_pieces(&self, op: impl Fn(&AffinePiece) -> AffinePiece) -> Result<Self> {
        let comps = self
            .components
            .iter()
            .map(|c| MaxAffine::new(c.pieces.iter().map(&op).collect()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(comps, self.domain)
    }
}
