//! Exact one-dimensional restrictions `t -> f(a + t (b - a))`, `t in [0, 1]`.

use serde::Serialize;

use super::{BoxRegion, ExtReal, PLFunction, Point};
use crate::error::{Error, Result};

/// Knots closer than this (in the segment parameter) are merged.
const KNOT_TOL: f64 = 1e-12;
/// Adjacent pieces whose slopes agree within this relative tolerance are merged.
const SLOPE_TOL: f64 = 1e-9;
/// Relative tolerance for ties between candidate minima.
pub(crate) const TIE_TOL: f64 = 1e-12;

/// Piecewise-affine profile of `f` along a segment.
///
/// Every affine piece `<g, x> + o` becomes `c + s t` on the segment; the profile
/// keeps those forms so [`value_at`](Self::value_at) is an exact min-max rather
/// than an interpolation between knots.
#[derive(Clone, Debug, Serialize)]
pub struct SegmentProfile {
    start: Point,
    end: Point,
    #[serde(skip)]
    forms: Vec<Vec<(f64, f64)>>,
    #[serde(skip)]
    domain_box: Option<BoxRegion>,
    /// Parameter interval on which `f` is finite; `None` if identically `+inf`.
    finite_on: Option<(f64, f64)>,
    knots: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SegmentMinimum {
    pub t: f64,
    pub value: ExtReal,
    pub point: Point,
}

pub fn restrict_to_segment(f: &PLFunction, a: &Point, b: &Point) -> Result<SegmentProfile> {
    a.check_dim(f.dim())?;
    b.check_dim(f.dim())?;
    let dir = b.sub(a);
    let forms: Vec<Vec<(f64, f64)>> = f
        .components()
        .iter()
        .map(|c| {
            c.pieces()
                .iter()
                .map(|p| (p.value(a), p.gradient.dot(&dir)))
                .collect()
        })
        .collect();

    let finite_on = match f.domain() {
        None => Some((0.0, 1.0)),
        Some(bx) => parameter_window(bx, a, &dir),
    };

    let mut profile = SegmentProfile {
        start: *a,
        end: *b,
        forms,
        domain_box: f.domain().copied(),
        finite_on,
        knots: Vec::new(),
        values: Vec::new(),
        slopes: Vec::new(),
    };
    if let Some((lo, hi)) = finite_on {
        profile.build(lo, hi);
    }
    Ok(profile)
}

/// Interval of `t in [0, 1]` with `a + t dir` inside the box.
fn parameter_window(bx: &BoxRegion, a: &Point, dir: &Point) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for j in 0..a.dim() {
        let (l, u, x, d) = (bx.lower.get(j), bx.upper.get(j), a.get(j), dir.get(j));
        if d == 0.0 {
            if x < l || x > u {
                return None;
            }
        } else {
            let (t1, t2) = ((l - x) / d, (u - x) / d);
            lo = lo.max(t1.min(t2));
            hi = hi.min(t1.max(t2));
        }
    }
    (lo <= hi).then_some((lo, hi))
}

impl SegmentProfile {
    fn build(&mut self, lo: f64, hi: f64) {
        let flat: Vec<(f64, f64)> = self.forms.iter().flatten().copied().collect();
        let mut cand = vec![lo, hi];
        for (i, &(ci, si)) in flat.iter().enumerate() {
            for &(cj, sj) in &flat[i + 1..] {
                let ds = si - sj;
                if ds != 0.0 {
                    let t = (cj - ci) / ds;
                    if t > lo + KNOT_TOL && t < hi - KNOT_TOL {
                        cand.push(t);
                    }
                }
            }
        }
        cand.sort_by(f64::total_cmp);
        let mut knots: Vec<f64> = Vec::with_capacity(cand.len());
        for t in cand {
            match knots.last() {
                Some(&last) if t - last <= KNOT_TOL => {}
                _ => knots.push(t),
            }
        }
        if knots.len() == 1 {
            if hi > lo {
                knots.push(hi);
            }
        } else if let Some(last) = knots.last_mut() {
            *last = hi;
        }

        // Slopes on each open interval, then drop knots where nothing bends.
        let raw_slopes: Vec<f64> = knots
            .windows(2)
            .map(|w| self.active_slope(0.5 * (w[0] + w[1])))
            .collect();
        let mut kept_knots = vec![knots[0]];
        let mut kept_slopes: Vec<f64> = Vec::new();
        for (i, &s) in raw_slopes.iter().enumerate() {
            match kept_slopes.last() {
                Some(&prev) if (prev - s).abs() <= SLOPE_TOL * (1.0 + prev.abs()) => {
                    *kept_knots.last_mut().unwrap() = knots[i + 1];
                }
                _ => {
                    kept_slopes.push(s);
                    kept_knots.push(knots[i + 1]);
                }
            }
        }
        if kept_slopes.is_empty() {
            kept_knots.truncate(1);
        }
        self.values = kept_knots.iter().map(|&t| self.form_value(t)).collect();
        self.knots = kept_knots;
        self.slopes = kept_slopes;
    }

    #[inline]
    fn form_value(&self, t: f64) -> f64 {
        self.forms.iter().fold(f64::INFINITY, |m, comp| {
            m.min(
                comp.iter()
                    .fold(f64::NEG_INFINITY, |mx, &(c, s)| mx.max(c + s * t)),
            )
        })
    }

    /// Slope of the active form at `t`; ties resolved toward the right derivative.
    fn active_slope(&self, t: f64) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for comp in &self.forms {
            let mut top = (f64::NEG_INFINITY, 0.0);
            for &(c, s) in comp {
                let v = c + s * t;
                if v > top.0 || (v == top.0 && s > top.1) {
                    top = (v, s);
                }
            }
            if top.0 < best.0 || (top.0 == best.0 && top.1 < best.1) {
                best = top;
            }
        }
        best.1
    }

    pub fn start(&self) -> &Point {
        &self.start
    }

    pub fn end(&self) -> &Point {
        &self.end
    }

    /// True when the segment misses the domain.
    pub fn is_identically_infinite(&self) -> bool {
        self.finite_on.is_none()
    }

    pub fn finite_interval(&self) -> Option<(f64, f64)> {
        self.finite_on
    }

    /// Sorted knots, including the ends of the finite interval.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Profile values at [`knots`](Self::knots).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Slope on each interval between consecutive knots.
    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// Knots strictly inside the finite interval.
    pub fn breakpoints(&self) -> &[f64] {
        if self.knots.len() <= 2 {
            &[]
        } else {
            &self.knots[1..self.knots.len() - 1]
        }
    }

    pub fn value_at(&self, t: f64) -> ExtReal {
        match self.finite_on {
            Some((lo, hi)) if t >= lo && t <= hi => ExtReal::Finite(self.form_value(t)),
            _ => ExtReal::PosInf,
        }
    }

    /// `a + t (b - a)`, pulled into the domain box and snapped onto faces it
    /// misses only by rounding.
    pub fn point_at(&self, t: f64) -> Point {
        let dir = self.end.sub(&self.start);
        let p = self.start.along(&dir, t);
        match &self.domain_box {
            Some(bx) if self.finite_on.is_some_and(|(lo, hi)| t >= lo && t <= hi) => {
                let mut q = bx.clamp(&p);
                for i in 0..q.dim() {
                    for face in [bx.lower.get(i), bx.upper.get(i)] {
                        if (q.get(i) - face).abs() <= KNOT_TOL * (1.0 + face.abs()) {
                            q.set(i, face);
                        }
                    }
                }
                q
            }
            _ => p,
        }
    }

    /// Slope of the first piece right of `t` (`+inf` when `t` is the right end of
    /// the finite interval, or outside it).
    pub fn right_slope(&self, t: f64) -> ExtReal {
        let Some((lo, hi)) = self.finite_on else {
            return ExtReal::PosInf;
        };
        if t < lo || t >= hi || self.slopes.is_empty() {
            return ExtReal::PosInf;
        }
        let i = self.knots.partition_point(|&k| k <= t).saturating_sub(1);
        ExtReal::Finite(self.slopes[i.min(self.slopes.len() - 1)])
    }

    /// The profile plus `mu * t`.
    pub fn tilted(&self, mu: f64) -> SegmentProfile {
        let mut out = self.clone();
        for comp in &mut out.forms {
            for form in comp.iter_mut() {
                form.1 += mu;
            }
        }
        for s in &mut out.slopes {
            *s += mu;
        }
        for (v, t) in out.values.iter_mut().zip(&self.knots) {
            *v += mu * t;
        }
        out
    }

    /// Exact global minimum over the finite interval; smallest `t` among ties.
    pub fn minimum(&self) -> Result<SegmentMinimum> {
        if self.finite_on.is_none() {
            return Err(Error::EmptyDomainOnSegment);
        }
        let best = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let tie = TIE_TOL * (1.0 + best.abs());
        let i = self
            .values
            .iter()
            .position(|&v| v <= best + tie)
            .expect("nonempty knots");
        let t = self.knots[i];
        Ok(SegmentMinimum {
            t,
            value: ExtReal::Finite(self.values[i]),
            point: self.point_at(t),
        })
    }
}

pub fn minimize_on_segment(f: &PLFunction, a: &Point, b: &Point) -> Result<SegmentMinimum> {
    restrict_to_segment(f, a, b)?.minimum()
}
