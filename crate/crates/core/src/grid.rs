use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func_model::{restrict_to_segment, BoxRegion, PLFunction, Point};

/// Uniform lattice of step (at most) `h` over a box.
///
/// Axis `j` is split into `ceil(width_j / h)` equal cells, so the box corners are
/// always lattice points and dyadic boxes with dyadic `h` give exact coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub h: f64,
    pub region: BoxRegion,
}

/// Default number of cells across the widest side of a region.
pub const DEFAULT_CELLS: f64 = 64.0;

impl GridSpec {
    pub fn new(h: f64, region: BoxRegion) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid step must be positive, got {h}"
            )));
        }
        Ok(Self { h, region })
    }

    /// Step `max_width / 64` (or 1/64 for a degenerate region).
    pub fn default_for(region: BoxRegion) -> Self {
        let w = region.max_width();
        let h = if w > 0.0 { w / DEFAULT_CELLS } else { 1.0 / DEFAULT_CELLS };
        Self { h, region }
    }

    pub fn refined(&self) -> Self {
        Self {
            h: self.h / 2.0,
            region: self.region,
        }
    }

    pub fn dim(&self) -> usize {
        self.region.dim()
    }

    pub fn cells(&self, axis: usize) -> usize {
        let w = self.region.width(axis);
        if w <= 0.0 {
            0
        } else {
            ((w / self.h) - 1e-9).ceil().max(1.0) as usize
        }
    }

    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        let n = self.cells(axis);
        let lo = self.region.lower.get(axis);
        if n == 0 {
            lo
        } else if i == n {
            self.region.upper.get(axis)
        } else {
            lo + self.region.width(axis) * (i as f64) / (n as f64)
        }
    }

    pub fn len(&self) -> usize {
        (0..self.dim()).map(|j| self.cells(j) + 1).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// All lattice points, axis 0 varying slowest.
    pub fn points(&self) -> Vec<Point> {
        let ranges: Vec<(usize, usize)> = (0..self.dim()).map(|j| (0, self.cells(j))).collect();
        self.enumerate(&ranges)
    }

    /// Lattice points inside `window` (closed), in lattice order.
    pub fn points_within(&self, window: &BoxRegion) -> Vec<Point> {
        let mut ranges = Vec::with_capacity(self.dim());
        for j in 0..self.dim() {
            let n = self.cells(j);
            let lo = self.region.lower.get(j);
            let w = self.region.width(j);
            let (a, b) = if n == 0 {
                (0, 0)
            } else {
                let s = |x: f64| (x - lo) / w * n as f64;
                let a = (s(window.lower.get(j)) - 1e-9).ceil().max(0.0) as usize;
                let b = (s(window.upper.get(j)) + 1e-9).floor().min(n as f64);
                if b < 0.0 {
                    return Vec::new();
                }
                (a, b as usize)
            };
            if a > b {
                return Vec::new();
            }
            ranges.push((a, b));
        }
        self.enumerate(&ranges)
            .into_iter()
            .filter(|p| window.contains(p))
            .collect()
    }

    /// Lattice points inside `window`; for 1D functions the breakpoints of `f`
    /// inside the window are merged in, so set-valued fibers at kinks are seen.
    pub fn points_with_kinks(&self, f: &PLFunction, window: &BoxRegion) -> Vec<Point> {
        let mut pts = self.points_within(window);
        if f.dim() == 1 && window.dim() == 1 {
            if let Ok(prof) = restrict_to_segment(f, &window.lower, &window.upper) {
                pts.extend(prof.breakpoints().iter().map(|&t| prof.point_at(t)));
                pts.sort_by(Point::lex_cmp);
                pts.dedup_by(|a, b| (a.get(0) - b.get(0)).abs() <= 1e-12);
            }
        }
        pts
    }

    fn enumerate(&self, ranges: &[(usize, usize)]) -> Vec<Point> {
        let axes: Vec<Vec<f64>> = ranges
            .iter()
            .enumerate()
            .map(|(j, &(a, b))| (a..=b).map(|i| self.coord(j, i)).collect())
            .collect();
        let mut out = Vec::with_capacity(axes.iter().map(Vec::len).product());
        let mut p = Point::zeros(self.dim());
        fill(&axes, 0, &mut p, &mut out);
        out
    }
}

fn fill(axes: &[Vec<f64>], j: usize, p: &mut Point, out: &mut Vec<Point>) {
    if j == axes.len() {
        out.push(*p);
        return;
    }
    for &v in &axes[j] {
        p.set(j, v);
        fill(axes, j + 1, p, out);
    }
}
