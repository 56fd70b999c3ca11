//! Seeded random instances and the property checks run by `subdiff-lab suite`.
//!
//! Every instance draws from its own ChaCha8 stream (`seed`, stream = criterion
//! id * 2^32 + instance index), so a suite is reproducible from its seed and
//! independent of thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::calculus::{LINK_TOL, directional_derivative, subdiff_contains, verify_link, LinkReport};
use crate::error::{Error, Result};
use crate::func_model::{
    minimize_on_box, restrict_to_segment, AffinePiece, BoxRegion, ExtReal, MaxAffine, PLFunction,
    Point,
};
use crate::grid::GridSpec;
use crate::monotone::{
    check_absorbing, check_maximal_monotone, dual_grid_for, monotonically_related,
    sample_subdiff_graph,
};
use crate::optimality::{
    brute_force_is_min, directional_test, minty_sufficient, refute_optimality, subdiff_sufficient,
    subdiff_test, Verdict, OPT_TOL,
};
use crate::parser::{format, parse, parse_function};
use crate::variational::{ekeland_point, mean_value_witness, perturbed_min_gap};

pub const REPORT_SCHEMA: &str = "subdiff-lab-report/1";

/// Half-width of the domain box `[-2, 2]^n` of generated instances.
pub const DOMAIN_HALF_WIDTH: f64 = 2.0;

/// Residual allowed in the mean value and Ekeland checks.
pub const WITNESS_TOL: f64 = 1e-9;
/// Tolerance of the parser round trip.
pub const ROUND_TRIP_TOL: f64 = 1e-12;
/// Distance tolerance of the maximal monotonicity check.
pub const MONOTONE_TOL: f64 = 1e-9;
/// Largest share of inconclusive verdicts in the characterization checks.
pub const MAX_INCONCLUSIVE_RATE: f64 = 0.02;

const MAX_LISTED_FAILURES: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
    Text,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Instances for the enlargement checks (half 1D, half 2D; half convex).
    pub link_instances: usize,
    /// Instances compared at the refined step for the convex equality gap.
    pub link_refined: usize,
    pub mean_value_tuples: usize,
    pub ekeland_tuples: usize,
    /// Instances for the optimality checks (half 1D, half 2D; half convex).
    pub optimality_instances: usize,
    pub absorb_convex: usize,
    pub absorb_nonconvex: usize,
    pub absorb_refined: usize,
    pub maxmono_instances: usize,
    pub off_graph_pairs: usize,
    pub parser_expressions: usize,
    pub max_pieces: usize,
    pub h: f64,
    pub tol: f64,
    pub eps_schedule: Vec<f64>,
    pub format: OutputFormat,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            link_instances: 200,
            link_refined: 20,
            mean_value_tuples: 500,
            ekeland_tuples: 200,
            optimality_instances: 300,
            absorb_convex: 100,
            absorb_nonconvex: 50,
            absorb_refined: 10,
            maxmono_instances: 50,
            off_graph_pairs: 1000,
            parser_expressions: 100,
            max_pieces: 8,
            h: 1.0 / 64.0,
            tol: OPT_TOL,
            eps_schedule: crate::calculus::default_schedule(),
            format: OutputFormat::Json,
        }
    }
}

impl SuiteConfig {
    /// Small counts and a coarser lattice, for smoke runs.
    pub fn quick() -> Self {
        Self {
            link_instances: 8,
            link_refined: 2,
            mean_value_tuples: 40,
            ekeland_tuples: 8,
            optimality_instances: 12,
            absorb_convex: 4,
            absorb_nonconvex: 2,
            absorb_refined: 1,
            maxmono_instances: 2,
            off_graph_pairs: 50,
            parser_expressions: 10,
            h: 1.0 / 16.0,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub label: String,
    pub claim: String,
    pub instances: usize,
    pub passed: usize,
    pub pass: bool,
    pub details: Value,
    pub failures: Vec<String>,
}

impl CriterionResult {
    fn new(id: u8, label: &str, claim: &str) -> Self {
        Self {
            id,
            label: label.into(),
            claim: claim.into(),
            instances: 0,
            passed: 0,
            pass: false,
            details: Value::Null,
            failures: Vec::new(),
        }
    }

    fn record(&mut self, ok: bool, failure: impl FnOnce() -> String) {
        self.instances += 1;
        if ok {
            self.passed += 1;
        } else if self.failures.len() < MAX_LISTED_FAILURES {
            self.failures.push(failure());
        }
    }

    /// One line: `[PASS] 2 link-inequality: 200/200 ...`.
    pub fn summary(&self) -> String {
        format!(
            "[{}] {:>2} {}: {}/{} {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.label,
            self.passed,
            self.instances,
            self.claim
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema: String,
    pub timestamp: u64,
    pub config: SuiteConfig,
    pub criteria: Vec<CriterionResult>,
    pub pass: bool,
}

impl SuiteReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,label,instances,passed,pass\n");
        for c in &self.criteria {
            out.push_str(&format!("{},{},{},{},{}\n", c.id, c.label, c.instances, c.passed, c.pass));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out: Vec<String> = self.criteria.iter().map(CriterionResult::summary).collect();
        out.push(format!("overall: {}", if self.pass { "PASS" } else { "FAIL" }));
        out.join("\n") + "\n"
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Json => self.to_json() + "\n",
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Text => self.to_text(),
        }
    }
}

/// ChaCha8 stream `stream` of `seed`.
pub fn instance_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn stream_id(criterion: u64, index: usize) -> u64 {
    (criterion << 32) | index as u64
}

/// `k / 16` with `k` uniform in `[-64, 64]`.
fn coefficient(rng: &mut impl Rng) -> f64 {
    rng.random_range(-64i32..=64) as f64 / 16.0
}

fn random_piece(rng: &mut impl Rng, dim: usize) -> Result<AffinePiece> {
    let g: Vec<f64> = (0..dim).map(|_| coefficient(rng)).collect();
    Ok(AffinePiece::new(Point::new(&g)?, coefficient(rng)))
}

/// Random max-affine (`convex`) or min of two max-affines with `pieces` pieces in
/// total, coefficients in `[-4, 4]` on the 1/16 lattice, domain `[-2, 2]^dim`.
///
/// In 1D the first two pieces of a convex instance slope down and up, so the
/// function is V-shaped with its kink somewhere on the line.
pub fn generate_instance_with(rng: &mut impl Rng, dim: usize, convex: bool, pieces: usize) -> Result<PLFunction> {
    if !(2..=16).contains(&pieces) {
        return Err(Error::InvalidArgument(format!("pieces must lie in [2, 16], got {pieces}")));
    }
    if dim == 0 || dim > crate::func_model::MAX_DIM {
        return Err(Error::UnsupportedDimension(dim));
    }
    let mut ps = (0..pieces)
        .map(|_| random_piece(rng, dim))
        .collect::<Result<Vec<_>>>()?;
    if convex && dim == 1 {
        for (i, sign) in [(0, -1.0), (1, 1.0)] {
            let k = rng.random_range(1i32..=64) as f64 / 16.0;
            ps[i] = AffinePiece::new(Point::scalar(sign * k), ps[i].offset);
        }
    }
    let comps = if convex {
        vec![MaxAffine::new(ps)?]
    } else {
        let right = ps.split_off(pieces / 2);
        vec![MaxAffine::new(ps)?, MaxAffine::new(right)?]
    };
    PLFunction::new(comps, Some(domain_box(dim)?))
}

/// [`generate_instance_with`] on stream 0 of `seed`.
pub fn generate_instance(seed: u64, dim: usize, convex: bool, pieces: usize) -> Result<PLFunction> {
    generate_instance_with(&mut instance_rng(seed, 0), dim, convex, pieces)
}

pub fn domain_box(dim: usize) -> Result<BoxRegion> {
    BoxRegion::cube(dim, -DOMAIN_HALF_WIDTH, DOMAIN_HALF_WIDTH)
}

/// Point with coordinates `k/64` strictly inside `region`.
fn interior_point(rng: &mut impl Rng, region: &BoxRegion) -> Result<Point> {
    let mut c = Vec::with_capacity(region.dim());
    for j in 0..region.dim() {
        let lo = (region.lower.get(j) * 64.0).floor() as i64 + 1;
        let hi = (region.upper.get(j) * 64.0).ceil() as i64 - 1;
        c.push(rng.random_range(lo..=hi) as f64 / 64.0);
    }
    Point::new(&c)
}

fn nonzero_direction(rng: &mut impl Rng, dim: usize) -> Result<Point> {
    loop {
        let c: Vec<f64> = (0..dim).map(|_| rng.random_range(-32i32..=32) as f64 / 16.0).collect();
        let d = Point::new(&c)?;
        if !d.is_zero() {
            return Ok(d);
        }
    }
}

/// Instance layout shared by several criteria: first half 1D, second half 2D,
/// alternating convex / nonconvex.
fn layout(i: usize, n: usize) -> (usize, bool) {
    (if i < n / 2 { 1 } else { 2 }, i % 2 == 0)
}

fn pieces(rng: &mut impl Rng, cfg: &SuiteConfig) -> usize {
    rng.random_range(2..=cfg.max_pieces.clamp(2, 16))
}

fn lattice(h: f64, dim: usize) -> Result<GridSpec> {
    GridSpec::new(h, domain_box(dim)?)
}

fn par_indexed<T: Send>(n: usize, run: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).into_par_iter().map(run).collect()
}

struct LinkCase {
    convex: bool,
    lipschitz: f64,
    f: PLFunction,
    xbar: Point,
    d: Point,
    report: Result<LinkReport>,
}

fn link_cases(cfg: &SuiteConfig) -> Vec<LinkCase> {
    let n = cfg.link_instances;
    par_indexed(n, |i| {
        let mut rng = instance_rng(cfg.seed, stream_id(1, i));
        let (dim, convex) = layout(i, n);
        let k = pieces(&mut rng, cfg);
        let f = generate_instance_with(&mut rng, dim, convex, k).expect("valid instance parameters");
        let dom = domain_box(dim).expect("valid dimension");
        let xbar = interior_point(&mut rng, &dom).expect("valid point");
        let d = nonzero_direction(&mut rng, dim).expect("valid direction");
        let report = lattice(cfg.h, dim).and_then(|g| verify_link(&f, &xbar, &d, &cfg.eps_schedule, &g));
        LinkCase { convex, lipschitz: f.lipschitz(), f, xbar, d, report }
    })
}

fn link_criteria(cfg: &SuiteConfig) -> [CriterionResult; 3] {
    let cases = link_cases(cfg);
    let mut c1 = CriterionResult::new(
        1,
        "enlargement-nonempty",
        "every enlargement in the eps schedule is nonempty",
    );
    let mut c2 = CriterionResult::new(
        2,
        "link-inequality",
        "f'(xbar; d) <= sup <enlargement_eps, d> + 1e-7 for every eps",
    );
    let mut c3 = CriterionResult::new(
        3,
        "convex-link-equality",
        "convex f: |f'(xbar; d) - s(eps_min)| <= 1e-6 + 2hL; gap at least halves with h",
    );
    let mut worst_gap_excess = f64::NEG_INFINITY;
    let mut nonzero_gaps = 0;
    for (i, c) in cases.iter().enumerate() {
        let tag = || format!("instance {i}: f = {}, xbar = {}, d = {}", format(&c.f), c.xbar, c.d);
        match &c.report {
            Err(e) => {
                c1.record(false, || format!("{}: {e}", tag()));
                c2.record(false, || format!("{}: {e}", tag()));
                if c.convex {
                    c3.record(false, || format!("{}: {e}", tag()));
                }
            }
            Ok(r) => {
                c1.record(r.schedule.iter().all(|s| s.count > 0), || {
                    format!("{}: empty enlargement", tag())
                });
                c2.record(r.pass, || {
                    format!("{}: {}", tag(), r.diagnostic.clone().unwrap_or_default())
                });
                if c.convex {
                    let bound = 1e-6 + 2.0 * cfg.h * c.lipschitz;
                    let gap = r.convex_equal.unwrap_or(f64::INFINITY);
                    worst_gap_excess = worst_gap_excess.max(gap - bound);
                    if gap > 0.0 {
                        nonzero_gaps += 1;
                    }
                    c3.record(gap <= bound, || {
                        format!("{}: gap {gap} exceeds 1e-6 + 2hL = {bound}", tag())
                    });
                }
            }
        }
    }
    let convex: Vec<&LinkCase> = cases.iter().filter(|c| c.convex).collect();
    let refined: Vec<(f64, Result<f64>)> = convex
        .par_iter()
        .take(cfg.link_refined)
        .map(|c| {
            let coarse = c.report.as_ref().ok().and_then(|r| r.convex_equal).unwrap_or(f64::INFINITY);
            let fine = lattice(cfg.h / 2.0, c.f.dim())
                .and_then(|g| verify_link(&c.f, &c.xbar, &c.d, &cfg.eps_schedule, &g))
                .map(|r| r.convex_equal.unwrap_or(f64::INFINITY));
            (coarse, fine)
        })
        .collect();
    let mut halving_failures = 0;
    for (j, (coarse, fine)) in refined.iter().enumerate() {
        let ok = matches!(fine, Ok(g) if *g <= coarse / 2.0);
        if !ok {
            halving_failures += 1;
            if c3.failures.len() < MAX_LISTED_FAILURES {
                c3.failures.push(format!(
                    "refined convex instance {j}: gap {coarse} at h, {fine:?} at h/2"
                ));
            }
        }
    }
    c1.pass = c1.passed == c1.instances;
    c2.pass = c2.passed == c2.instances;
    c3.pass = c3.passed == c3.instances && halving_failures == 0;
    c1.details = json!({ "schedule": cfg.eps_schedule, "h": cfg.h });
    c2.details = json!({ "tol": LINK_TOL });
    c3.details = json!({
        "nonzero_gaps": nonzero_gaps,
        "worst_gap_minus_bound": worst_gap_excess,
        "refined_instances": refined.len(),
        "refined_failures": halving_failures,
    });
    [c1, c2, c3]
}

fn mean_value_criterion(cfg: &SuiteConfig) -> CriterionResult {
    let mut c = CriterionResult::new(
        4,
        "mean-value-inequality",
        "lambda <= f'(x0; xbar - x) + 1e-9, f(x0) <= f(x) + t0 lambda + 1e-9, t0 < 1",
    );
    let n = cfg.mean_value_tuples;
    let outcomes: Vec<std::result::Result<(), String>> = par_indexed(n, |i| {
        let mut rng = instance_rng(cfg.seed, stream_id(4, i));
        let dim = 1 + i % 2;
        let convex = (i / 2) % 2 == 0;
        let k = pieces(&mut rng, cfg);
        let f = generate_instance_with(&mut rng, dim, convex, k).map_err(|e| e.to_string())?;
        let dom = domain_box(dim).map_err(|e| e.to_string())?;
        let x = interior_point(&mut rng, &dom).map_err(|e| e.to_string())?;
        let roll = rng.random_range(0..20u32);
        let xbar = if roll == 0 {
            x
        } else if roll <= 2 {
            // Outside the domain: f(xbar) = +inf.
            let mut p = interior_point(&mut rng, &dom).map_err(|e| e.to_string())?;
            p.set(0, rng.random_range(130i32..=192) as f64 / 64.0);
            p
        } else {
            interior_point(&mut rng, &dom).map_err(|e| e.to_string())?
        };
        let f_x = f.raw_value(&x);
        let lambda = match f.value(&xbar) {
            ExtReal::Finite(fb) => (fb - f_x) - rng.random_range(0i32..=64) as f64 / 64.0,
            ExtReal::PosInf => rng.random_range(-256i32..=256) as f64 / 64.0,
        };
        let tag = format!("tuple {i}: f = {}, x = {x}, xbar = {xbar}, lambda = {lambda}", format(&f));
        let w = mean_value_witness(&f, &x, &xbar, lambda).map_err(|e| format!("{tag}: {e}"))?;
        if !(w.t0 >= 0.0 && w.t0 < 1.0) {
            return Err(format!("{tag}: t0 = {}", w.t0));
        }
        let expected = x.along(&xbar.sub(&x), w.t0);
        if w.x0.sub(&expected).norm_inf() > 1e-12 * (1.0 + expected.norm_inf()) {
            return Err(format!("{tag}: x0 = {} is not x + t0 (xbar - x)", w.x0));
        }
        let dd = directional_derivative(&f, &w.x0, &xbar.sub(&x)).map_err(|e| format!("{tag}: {e}"))?;
        if dd < ExtReal::Finite(lambda - WITNESS_TOL) {
            return Err(format!("{tag}: f'(x0; xbar - x) = {dd} < lambda"));
        }
        let f_x0 = f.finite_value(&w.x0).map_err(|e| format!("{tag}: {e}"))?;
        if f_x0 > f_x + w.t0 * lambda + WITNESS_TOL {
            return Err(format!("{tag}: f(x0) = {f_x0} > f(x) + t0 lambda"));
        }
        Ok(())
    });
    for o in outcomes {
        c.record(o.is_ok(), || o.clone().unwrap_err());
    }
    c.pass = c.passed == c.instances;
    c.details = json!({ "tol": WITNESS_TOL });
    c
}

fn ekeland_criterion(cfg: &SuiteConfig) -> CriterionResult {
    let mut c = CriterionResult::new(
        5,
        "ekeland-point",
        "f(x_eps) <= f(xbar), |x_eps - xbar| <= lambda, perturbed minimality residual <= 1e-9 on 1000 probes",
    );
    let n = cfg.ekeland_tuples;
    let outcomes: Vec<std::result::Result<f64, String>> = par_indexed(n, |i| {
        let mut rng = instance_rng(cfg.seed, stream_id(5, i));
        let (dim, convex) = layout(i, n);
        let k = pieces(&mut rng, cfg);
        let f = generate_instance_with(&mut rng, dim, convex, k).map_err(|e| e.to_string())?;
        let dom = domain_box(dim).map_err(|e| e.to_string())?;
        let xbar = interior_point(&mut rng, &dom).map_err(|e| e.to_string())?;
        let lambda = rng.random_range(8i32..=64) as f64 / 64.0;
        let ball = BoxRegion::ball_inf(&xbar, lambda)
            .ok()
            .and_then(|b| b.intersect(&dom))
            .ok_or("empty ball")?;
        let inf = minimize_on_box(&f, &ball, &GridSpec::default_for(ball))
            .map_err(|e| e.to_string())?
            .value
            .to_f64();
        let eps = (f.raw_value(&xbar) - inf) + rng.random_range(1i32..=32) as f64 / 64.0;
        let tag = format!("tuple {i}: f = {}, xbar = {xbar}, eps = {eps}, lambda = {lambda}", format(&f));
        let w = ekeland_point(&f, &xbar, eps, lambda).map_err(|e| format!("{tag}: {e}"))?;
        let f_xbar = f.finite_value(&xbar).map_err(|e| e.to_string())?;
        let f_xeps = f.finite_value(&w.x_eps).map_err(|e| format!("{tag}: {e}"))?;
        if f_xeps > f_xbar + WITNESS_TOL {
            return Err(format!("{tag}: f(x_eps) = {f_xeps} > f(xbar) = {f_xbar}"));
        }
        if w.x_eps.sub(&xbar).norm_inf() > w.lambda {
            return Err(format!("{tag}: x_eps = {} outside the ball", w.x_eps));
        }
        let (lattice_gap, probes) =
            perturbed_min_gap(&f, &w.x_eps, &xbar, eps, w.lambda).map_err(|e| format!("{tag}: {e}"))?;
        let cloud_gap = random_probe_gap(&mut rng, &f, &w.x_eps, &xbar, eps, w.lambda, &dom);
        let gap = lattice_gap.max(cloud_gap);
        if probes < 900 || gap > WITNESS_TOL {
            return Err(format!("{tag}: perturbed minimality residual {gap} over {probes} probes"));
        }
        Ok(gap)
    });
    let mut worst = f64::NEG_INFINITY;
    for o in outcomes {
        if let Ok(g) = &o {
            worst = worst.max(*g);
        }
        c.record(o.is_ok(), || o.clone().unwrap_err());
    }
    c.pass = c.passed == c.instances;
    c.details = json!({ "worst_residual": worst, "tol": WITNESS_TOL });
    c
}

/// Perturbed minimality residual over 1000 uniform random probes.
fn random_probe_gap(
    rng: &mut impl Rng,
    f: &PLFunction,
    x_eps: &Point,
    xbar: &Point,
    eps: f64,
    lambda: f64,
    dom: &BoxRegion,
) -> f64 {
    let window = BoxRegion::ball_inf(x_eps, lambda / 4.0)
        .ok()
        .and_then(|b| b.intersect(&BoxRegion::ball_inf(xbar, lambda).ok()?))
        .and_then(|b| b.intersect(dom));
    let Some(window) = window else { return f64::NEG_INFINITY };
    let f0 = f.raw_value(x_eps);
    let k = eps / lambda;
    (0..1000)
        .map(|_| {
            let c: Vec<f64> = (0..window.dim())
                .map(|j| rng.random_range(window.lower.get(j)..=window.upper.get(j)))
                .collect();
            let y = Point::new(&c).expect("window point");
            f0 - f.raw_value(&y) - k * y.sub(x_eps).norm_inf()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

struct OptCase {
    tag: String,
    directional: std::result::Result<(Verdict, bool), String>,
    subdiff: std::result::Result<(Verdict, bool), String>,
    minty: std::result::Result<bool, String>,
    sufficient: std::result::Result<bool, String>,
    is_min: std::result::Result<bool, String>,
    refutation: Option<std::result::Result<(), String>>,
}

fn optimality_case(cfg: &SuiteConfig, i: usize) -> OptCase {
    let n = cfg.optimality_instances;
    let mut rng = instance_rng(cfg.seed, stream_id(6, i));
    let (dim, convex) = layout(i, n);
    let k = pieces(&mut rng, cfg);
    let f = generate_instance_with(&mut rng, dim, convex, k).expect("valid instance parameters");
    let half = if i % 4 < 2 { DOMAIN_HALF_WIDTH } else { 1.5 };
    let region = BoxRegion::cube(dim, -half, half).expect("valid region");
    let grid = GridSpec::new(cfg.h, region).expect("valid step");
    let mut xbar = interior_point(&mut rng, &region).expect("valid point");
    if i % 3 == 0 {
        if let Ok(m) = minimize_on_box(&f, &region, &grid) {
            if region.contains_interior(&m.point) {
                xbar = m.point;
            }
        }
    }
    let tag = format!("instance {i}: f = {}, region = {}, xbar = {xbar}", format(&f), crate::parser::format_box(&region));
    let s = |e: Error| format!("{tag}: {e}");
    let is_min = brute_force_is_min(&f, &region, &xbar, &grid).map_err(s);
    let refutation = match is_min {
        Ok(false) => Some(refute_optimality(&f, &region, &xbar, &grid).map_err(s).and_then(|w| {
            let f_y = f.finite_value(&w.y_eps).map_err(s)?;
            let f_xbar = f.finite_value(&xbar).map_err(s)?;
            let inner = w.ystar_eps.dot(&xbar.sub(&w.y_eps));
            let member = subdiff_contains(&f, &w.y_eps, &w.ystar_eps, 1e-9).map_err(s)?;
            if f_y < f_xbar - cfg.tol && inner > cfg.tol && member && region.contains_interior(&w.y_eps) {
                Ok(())
            } else {
                Err(format!(
                    "{tag}: witness y = {}, y* = {}, f(y) = {f_y}, inner = {inner}, member = {member}",
                    w.y_eps, w.ystar_eps
                ))
            }
        })),
        _ => None,
    };
    OptCase {
        directional: directional_test(&f, &region, &xbar, &grid)
            .map(|r| (r.verdict, r.brute_force_min))
            .map_err(s),
        subdiff: subdiff_test(&f, &region, &xbar, &grid)
            .map(|r| (r.verdict, r.brute_force_min))
            .map_err(s),
        minty: minty_sufficient(&f, &region, &xbar, &grid).map_err(s),
        sufficient: subdiff_sufficient(&f, &region, &xbar, &grid).map_err(s),
        is_min,
        refutation,
        tag,
    }
}

fn characterization(
    id: u8,
    label: &str,
    claim: &str,
    cases: &[OptCase],
    pick: impl Fn(&OptCase) -> &std::result::Result<(Verdict, bool), String>,
) -> CriterionResult {
    let mut c = CriterionResult::new(id, label, claim);
    let (mut certified, mut refuted, mut inconclusive) = (0, 0, 0);
    for case in cases {
        match (pick(case), &case.is_min) {
            (Ok((v, _)), Ok(is_min)) => {
                match v {
                    Verdict::OptimalCertified => certified += 1,
                    Verdict::NotOptimal => refuted += 1,
                    Verdict::Inconclusive => {
                        inconclusive += 1;
                        if c.failures.len() < MAX_LISTED_FAILURES {
                            c.failures.push(format!("{}: inconclusive", case.tag));
                        }
                        continue;
                    }
                }
                let agrees = (*v == Verdict::OptimalCertified) == *is_min;
                c.record(agrees, || format!("{}: verdict {v:?}, brute force min = {is_min}", case.tag));
            }
            (Err(e), _) | (_, Err(e)) => c.record(false, || e.clone()),
        }
    }
    let rate = inconclusive as f64 / cases.len().max(1) as f64;
    c.pass = c.passed == c.instances && rate <= MAX_INCONCLUSIVE_RATE;
    c.details = json!({
        "runs": cases.len(),
        "conclusive": c.instances,
        "optimal_certified": certified,
        "not_optimal": refuted,
        "inconclusive": inconclusive,
        "inconclusive_rate": rate,
    });
    c
}

fn optimality_criteria(cfg: &SuiteConfig) -> [CriterionResult; 4] {
    let cases = par_indexed(cfg.optimality_instances, |i| optimality_case(cfg, i));
    let c6 = characterization(
        6,
        "directional-characterization",
        "directional_test verdict agrees with brute force on conclusive runs (inconclusive <= 2%)",
        &cases,
        |c| &c.directional,
    );
    let c7 = characterization(
        7,
        "subdifferential-characterization",
        "subdiff_test verdict agrees with brute force on conclusive runs (inconclusive <= 2%)",
        &cases,
        |c| &c.subdiff,
    );
    let mut c8 = CriterionResult::new(
        8,
        "sufficient-conditions-sound",
        "minty_sufficient or subdiff_sufficient true implies brute-force minimality",
    );
    let (mut minty_true, mut sub_true) = (0, 0);
    for case in &cases {
        let outcome = (|| -> std::result::Result<bool, String> {
            let is_min = case.is_min.clone()?;
            let m = case.minty.clone()?;
            let s = case.sufficient.clone()?;
            minty_true += usize::from(m);
            sub_true += usize::from(s);
            Ok(is_min || (!m && !s))
        })();
        match outcome {
            Ok(ok) => c8.record(ok, || format!("{}: sufficient condition holds at a non-minimizer", case.tag)),
            Err(e) => c8.record(false, || e),
        }
    }
    c8.pass = c8.passed == c8.instances;
    c8.details = json!({ "minty_true": minty_true, "subdiff_sufficient_true": sub_true });

    let mut c9 = CriterionResult::new(
        9,
        "refutation-witness",
        "f(y_eps) < f(xbar) - 1e-7 and <y*_eps, xbar - y_eps> > 1e-7, re-verified",
    );
    for case in &cases {
        if let Some(r) = &case.refutation {
            c9.record(r.is_ok(), || r.clone().unwrap_err());
        }
    }
    c9.pass = c9.passed == c9.instances;
    c9.details = json!({ "non_minimal_instances": c9.instances });
    [c6, c7, c8, c9]
}

/// Distance in `R x R` from `(x, xstar)` to the graph of the 1D (Clarke)
/// subdifferential of `f` over the open interior of its domain box.
pub fn graph_distance_1d(f: &PLFunction, x: f64, xstar: f64) -> Result<f64> {
    if f.dim() != 1 {
        return Err(Error::UnsupportedDimension(f.dim()));
    }
    let bx = f.domain().copied().unwrap_or(domain_box(1)?);
    let prof = restrict_to_segment(f, &bx.lower, &bx.upper)?;
    let (lo, w) = (bx.lower.get(0), bx.width(0));
    let knots: Vec<f64> = prof.knots().iter().map(|t| lo + w * t).collect();
    let slopes: Vec<f64> = prof.slopes().iter().map(|s| s / w).collect();
    let seg = |a: (f64, f64), b: (f64, f64)| {
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = dx * dx + dy * dy;
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((x - a.0) * dx + (xstar - a.1) * dy) / len2).clamp(0.0, 1.0)
        };
        (x - a.0 - t * dx).hypot(xstar - a.1 - t * dy)
    };
    let mut best = f64::INFINITY;
    for (i, s) in slopes.iter().enumerate() {
        best = best.min(seg((knots[i], *s), (knots[i + 1], *s)));
        if i > 0 {
            best = best.min(seg((knots[i], slopes[i - 1]), (knots[i], *s)));
        }
    }
    Ok(best)
}

fn absorb_criterion(cfg: &SuiteConfig) -> CriterionResult {
    let mut c = CriterionResult::new(
        10,
        "polar-absorbed",
        "every polar member of the sampled graph lies within 2hL of the subdifferential; bound tracks h/2",
    );
    let total = cfg.absorb_convex + cfg.absorb_nonconvex;
    let run = |f: &PLFunction, h: f64| -> Result<(f64, usize, f64)> {
        let grid = lattice(h, 1)?;
        let r = check_absorbing(f, &grid, &dual_grid_for(f, h)?, 2.0 * h * f.lipschitz())?;
        Ok((r.max_violation_distance, r.polar_members, 2.0 * h * f.lipschitz()))
    };
    let outcomes: Vec<std::result::Result<usize, String>> = par_indexed(total, |i| {
        let mut rng = instance_rng(cfg.seed, stream_id(10, i));
        let convex = i < cfg.absorb_convex;
        let k = pieces(&mut rng, cfg);
        let f = generate_instance_with(&mut rng, 1, convex, k).map_err(|e| e.to_string())?;
        let tag = format!("instance {i}: f = {}", format(&f));
        let (dist, members, bound) = run(&f, cfg.h).map_err(|e| format!("{tag}: {e}"))?;
        if dist > bound {
            return Err(format!("{tag}: polar member at distance {dist} > 2hL = {bound}"));
        }
        if convex && i < cfg.absorb_refined {
            let (d2, _, b2) = run(&f, cfg.h / 2.0).map_err(|e| format!("{tag}: {e}"))?;
            if d2 > b2 {
                return Err(format!("{tag}: at h/2 distance {d2} > 2(h/2)L = {b2}"));
            }
        }
        Ok(members)
    });
    let mut members = 0;
    for o in outcomes {
        if let Ok(m) = &o {
            members += m;
        }
        c.record(o.is_ok(), || o.clone().unwrap_err());
    }
    c.pass = c.passed == c.instances;
    c.details = json!({
        "convex": cfg.absorb_convex,
        "nonconvex": cfg.absorb_nonconvex,
        "polar_members": members,
        "refined": cfg.absorb_refined,
    });
    c
}

fn maxmono_criterion(cfg: &SuiteConfig) -> CriterionResult {
    let mut c = CriterionResult::new(
        11,
        "maximal-monotone",
        "check_maximal_monotone passes; off-graph pairs beyond 10 tol + 2hL are not monotonically related",
    );
    let outcomes: Vec<std::result::Result<usize, String>> = par_indexed(cfg.maxmono_instances, |i| {
        let mut rng = instance_rng(cfg.seed, stream_id(11, i));
        let k = pieces(&mut rng, cfg);
        let f = generate_instance_with(&mut rng, 1, true, k).map_err(|e| e.to_string())?;
        let tag = format!("instance {i}: f = {}", format(&f));
        let grid = lattice(cfg.h, 1).map_err(|e| e.to_string())?;
        let dual = dual_grid_for(&f, cfg.h).map_err(|e| e.to_string())?;
        if !check_maximal_monotone(&f, &grid, &dual, MONOTONE_TOL).map_err(|e| format!("{tag}: {e}"))? {
            return Err(format!("{tag}: maximal monotonicity check failed"));
        }
        let t = sample_subdiff_graph(&f, &grid).map_err(|e| e.to_string())?;
        let threshold = 10.0 * MONOTONE_TOL + 2.0 * cfg.h * f.lipschitz();
        let (slo, shi) = (dual.region.lower.get(0), dual.region.upper.get(0));
        let mut tested = 0;
        // Pairs are drawn over the sampled primal range: beyond its ends the
        // sample only constrains from one side.
        let xmin = t.samples().first().map_or(0.0, |s| s.x.get(0));
        let xmax = t.samples().last().map_or(0.0, |s| s.x.get(0));
        if xmax <= xmin {
            return Err(format!("{tag}: degenerate sample graph"));
        }
        while tested < cfg.off_graph_pairs {
            let x = rng.random_range(xmin..xmax);
            let xs = rng.random_range(slo..=shi);
            if x <= xmin || graph_distance_1d(&f, x, xs).map_err(|e| e.to_string())? <= threshold {
                continue;
            }
            tested += 1;
            if monotonically_related(&Point::scalar(x), &Point::scalar(xs), &t, MONOTONE_TOL)
                .map_err(|e| e.to_string())?
            {
                return Err(format!("{tag}: off-graph pair ({x}, {xs}) is monotonically related"));
            }
        }
        Ok(tested)
    });
    let mut pairs = 0;
    for o in outcomes {
        if let Ok(p) = &o {
            pairs += p;
        }
        c.record(o.is_ok(), || o.clone().unwrap_err());
    }
    c.pass = c.passed == c.instances;
    c.details = json!({ "off_graph_pairs": pairs, "tol": MONOTONE_TOL });
    c
}

/// Random DSL text: nested `max`/`min`/`abs`/sums/positive scalings of affine leaves.
pub fn random_expression(rng: &mut impl Rng, dim: usize, depth: u32) -> String {
    let var = |j: usize| if dim == 1 { "x".to_string() } else { format!("x{}", j + 1) };
    let num = |rng: &mut dyn rand::RngCore| {
        let k = rng.random_range(-64i32..=64);
        format!("{}", k as f64 / 16.0)
    };
    let leaf = |rng: &mut dyn rand::RngCore| {
        let mut s = String::new();
        for j in 0..dim {
            if j > 0 {
                s.push_str(" + ");
            }
            s.push_str(&format!("{}*{}", num(rng), var(j)));
        }
        format!("{s} + {}", num(rng))
    };
    if depth == 0 || rng.random_range(0..4u32) == 0 {
        return leaf(rng);
    }
    match rng.random_range(0..6u32) {
        0 | 1 => {
            let k = rng.random_range(2..=3);
            let items: Vec<String> = (0..k).map(|_| random_expression(rng, dim, depth - 1)).collect();
            format!("max({})", items.join(", "))
        }
        2 => {
            let k = rng.random_range(2..=3);
            let items: Vec<String> = (0..k).map(|_| random_expression(rng, dim, depth - 1)).collect();
            format!("min({})", items.join(", "))
        }
        3 => format!("abs({})", leaf(rng)),
        4 => format!(
            "{} + {}",
            random_expression(rng, dim, depth - 1),
            random_expression(rng, dim, depth - 1)
        ),
        _ => format!(
            "{}*({})",
            rng.random_range(1i32..=48) as f64 / 16.0,
            random_expression(rng, dim, depth - 1)
        ),
    }
}

fn probe_points(dim: usize) -> Vec<Point> {
    // 1000 probes on [-3, 3]^dim, reaching outside the generated domains.
    let per_axis = match dim {
        1 => 1000,
        2 => 32,
        _ => 10,
    };
    let bx = BoxRegion::cube(dim, -3.0, 3.0).expect("probe box");
    GridSpec::new(6.0 / (per_axis - 1) as f64, bx).expect("probe step").points()
}

fn same_value(a: ExtReal, b: f64) -> bool {
    match a {
        ExtReal::PosInf => b == f64::INFINITY,
        ExtReal::Finite(v) => (v - b).abs() <= ROUND_TRIP_TOL,
    }
}

fn parser_criterion(cfg: &SuiteConfig) -> CriterionResult {
    let mut c = CriterionResult::new(
        12,
        "parser-round-trip",
        "parse(format(f)) equals f on 1000 probes (tol 1e-12); error cases diagnosed",
    );
    let n = cfg.parser_expressions;
    let outcomes: Vec<std::result::Result<(), String>> = par_indexed(n, |i| {
        let mut rng = instance_rng(cfg.seed, stream_id(12, i));
        let dim = 1 + i % 2;
        let mut text = random_expression(&mut rng, dim, 3);
        if i % 3 == 0 {
            text.push_str(if dim == 1 { " on box(-2,2)" } else { " on box(-2,2; -1.5,2.5)" });
        }
        let ast = parse(&text).map_err(|e| format!("'{text}': {e}"))?;
        let f = crate::parser::normalize(&ast).map_err(|e| format!("'{text}': {e}"))?;
        let canonical = format(&f);
        let back = parse_function(&canonical).map_err(|e| format!("'{canonical}': {e}"))?;
        if format(&back) != canonical {
            return Err(format!("'{canonical}' is not a fixed point of format . parse"));
        }
        // Random instances exercise the format -> parse direction on their own.
        let k = pieces(&mut rng, cfg);
        let g = generate_instance_with(&mut rng, dim, i % 4 < 2, k).map_err(|e| e.to_string())?;
        let g_back = parse_function(&format(&g)).map_err(|e| e.to_string())?;
        for p in probe_points(dim) {
            let direct = ast.eval(&p.coords()[..dim]);
            if !same_value(f.value(&p), direct) || f.value(&p) != back.value(&p) {
                return Err(format!("'{text}' differs at {p}"));
            }
            if g.value(&p) != g_back.value(&p) {
                return Err(format!("'{}' differs at {p} after a round trip", format(&g)));
            }
        }
        Ok(())
    });
    for o in outcomes {
        c.record(o.is_ok(), || o.clone().unwrap_err());
    }
    let diagnostics = [
        ("max(x,, 1)", matches!(parse("max(x,, 1)"), Err(Error::Syntax { line: 1, column: 7, .. }))),
        ("x * y", matches!(parse("x * y"), Err(Error::Nonlinear { line: 1, column: 3 }))),
        ("-max(x, 1)", matches!(parse("-max(x, 1)"), Err(Error::NegativeScale { line: 1, column: 1 }))),
    ];
    for (text, ok) in diagnostics {
        c.record(ok, || format!("'{text}' did not produce the expected diagnostic"));
    }
    c.pass = c.passed == c.instances;
    c.details = json!({ "expressions": n, "error_cases": diagnostics.len() });
    c
}

/// Runs one criterion (1..=12).
pub fn run_criterion(id: u8, cfg: &SuiteConfig) -> Result<CriterionResult> {
    Ok(match id {
        1..=3 => link_criteria(cfg)[(id - 1) as usize].clone(),
        4 => mean_value_criterion(cfg),
        5 => ekeland_criterion(cfg),
        6..=9 => optimality_criteria(cfg)[(id - 6) as usize].clone(),
        10 => absorb_criterion(cfg),
        11 => maxmono_criterion(cfg),
        12 => parser_criterion(cfg),
        _ => return Err(Error::InvalidArgument(format!("no criterion {id}"))),
    })
}

/// All twelve criteria, in order.
pub fn run_suite(cfg: &SuiteConfig) -> SuiteReport {
    let mut criteria = Vec::with_capacity(12);
    criteria.extend(link_criteria(cfg));
    criteria.push(mean_value_criterion(cfg));
    criteria.push(ekeland_criterion(cfg));
    criteria.extend(optimality_criteria(cfg));
    criteria.push(absorb_criterion(cfg));
    criteria.push(maxmono_criterion(cfg));
    criteria.push(parser_criterion(cfg));
    let pass = criteria.iter().all(|c| c.pass);
    SuiteReport {
        schema: REPORT_SCHEMA.into(),
        timestamp: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        config: cfg.clone(),
        criteria,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let a = generate_instance(0, 1, true, 2).unwrap();
        let b = generate_instance(0, 1, true, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.piece_count(), 2);
        assert!(a.is_convex());
        assert_eq!(a.domain(), Some(&domain_box(1).unwrap()));
    }

    #[test]
    fn generated_coefficients_are_sixteenths() {
        for seed in 0..20 {
            let f = generate_instance(seed, 2, false, 7).unwrap();
            assert_eq!(f.components().len(), 2);
            assert_eq!(f.piece_count(), 7);
            for p in f.pieces() {
                for v in p.gradient.coords().iter().chain([&p.offset]) {
                    assert!(v.abs() <= 4.0 && (v * 16.0).fract() == 0.0);
                }
            }
        }
    }

    #[test]
    fn seed_zero_line_instance_is_pinned() {
        let f = generate_instance(0, 1, true, 2).unwrap();
        assert_eq!(format(&f), "max(-2.0625*x + 1.6875, 2.8125*x - 0.25) on box(-2,2)");
    }

    #[test]
    fn rejects_bad_piece_counts() {
        assert!(generate_instance(0, 1, true, 1).is_err());
        assert!(generate_instance(0, 1, true, 17).is_err());
    }

    #[test]
    fn streams_differ() {
        let mut a = instance_rng(7, 0);
        let mut b = instance_rng(7, 1);
        let fa = generate_instance_with(&mut a, 2, true, 5).unwrap();
        let fb = generate_instance_with(&mut b, 2, true, 5).unwrap();
        assert_ne!(fa, fb);
    }

    #[test]
    fn staircase_distance() {
        let f = PLFunction::max_1d(&[(1.0, 0.0), (-1.0, 0.0)])
            .unwrap()
            .with_domain(domain_box(1).unwrap())
            .unwrap();
        assert_eq!(graph_distance_1d(&f, 0.0, 0.3).unwrap(), 0.0);
        assert_eq!(graph_distance_1d(&f, 1.0, 1.0).unwrap(), 0.0);
        assert!((graph_distance_1d(&f, 1.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((graph_distance_1d(&f, 0.5, 2.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_expressions_parse() {
        let mut rng = instance_rng(3, 0);
        for _ in 0..50 {
            let t = random_expression(&mut rng, 2, 3);
            parse_function(&t).unwrap();
        }
    }
}
