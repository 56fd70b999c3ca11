//! Worked examples through the public API, each checked against an oracle that
//! does not share code with the routine under test.

use subdiff_lab::*;

const ABS: &str = "max(x, -x)";
const TWO_VALLEYS: &str = "min(max(x - 1, 1 - x), max(x + 1, -x - 1))";

fn f(text: &str) -> PLFunction {
    parse_function(text).unwrap()
}

fn p(c: &[f64]) -> Point {
    Point::new(c).unwrap()
}

fn line(lo: f64, hi: f64, h: f64) -> GridSpec {
    GridSpec::new(h, BoxRegion::cube(1, lo, hi).unwrap()).unwrap()
}

#[test]
fn evaluation() {
    assert_eq!(f(ABS).value(&p(&[0.5])), ExtReal::Finite(0.5));
    assert_eq!(f("max(x, -x) on box(0,1)").value(&p(&[2.0])), ExtReal::PosInf);
    assert_eq!(f(TWO_VALLEYS).value(&p(&[0.0])), ExtReal::Finite(1.0));
}

#[test]
fn segment_profiles() {
    let prof = restrict_to_segment(&f(ABS), &p(&[-1.0]), &p(&[2.0])).unwrap();
    assert_eq!(prof.breakpoints().len(), 1);
    assert!((prof.breakpoints()[0] - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(prof.slopes(), &[-3.0, 3.0]);

    let boxed = f("max(x, -x) on box(0,1)");
    let prof = restrict_to_segment(&boxed, &p(&[-1.0]), &p(&[2.0])).unwrap();
    let (a, b) = prof.finite_interval().unwrap();
    assert!((a - 1.0 / 3.0).abs() < 1e-15 && (b - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(prof.value_at(0.2), ExtReal::PosInf);

    let m = minimize_on_segment(&f(ABS), &p(&[1.0]), &p(&[-2.0])).unwrap();
    assert!((m.t - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(m.value, ExtReal::Finite(0.0));
}

#[test]
fn box_minimization_with_ties() {
    let g = f("min(max(x - 1, 1 - x), max(x + 1, -x - 1))");
    let bx = BoxRegion::cube(1, -3.0, 3.0).unwrap();
    let m = minimize_on_box(&g, &bx, &GridSpec::default_for(bx)).unwrap();
    assert_eq!(m.point, p(&[-1.0]));
    assert_eq!(m.value, ExtReal::Finite(0.0));

    let bx = BoxRegion::cube(2, -1.0, 1.0).unwrap();
    let m = minimize_on_box(&f("max(x1, x2)"), &bx, &GridSpec::default_for(bx)).unwrap();
    assert_eq!(m.point, p(&[-1.0, -1.0]));
}

#[test]
fn directional_derivative_matches_difference_quotients() {
    let g = f(TWO_VALLEYS);
    let dd = directional_derivative(&g, &p(&[0.0]), &p(&[1.0])).unwrap().to_f64();
    for k in 5..=20 {
        let t = 2f64.powi(-k);
        let q = (g.raw_value(&p(&[t])) - g.raw_value(&p(&[0.0]))) / t;
        assert!((q - dd).abs() < 1e-9, "t = {t}: {q} vs {dd}");
    }
    assert_eq!(dd, -1.0);
    assert_eq!(directional_derivative(&f("3*x + 2"), &p(&[0.7]), &p(&[-2.0])).unwrap(), ExtReal::Finite(-6.0));
}

#[test]
fn subdifferential_vertices_satisfy_the_definition() {
    let cases = [
        ("max(2*x + 1, -x)", vec![-1.0 / 3.0], vec![vec![-1.0], vec![2.0]]),
        ("max(x1, x2)", vec![0.0, 0.0], vec![vec![0.0, 1.0], vec![1.0, 0.0]]),
    ];
    for (text, x, expected) in cases {
        let g = f(text);
        let x = p(&x);
        let sd = subdifferential(&g, &x).unwrap().canonical();
        let got: Vec<Vec<f64>> = sd.vertices().iter().map(|v| v.coords().to_vec()).collect();
        assert_eq!(got.len(), expected.len());
        for (a, b) in got.iter().zip(&expected) {
            assert!(a.iter().zip(b).all(|(u, v)| (u - v).abs() < 1e-12), "{text}: {got:?}");
        }
        let grid = GridSpec::new(1.0 / 8.0, BoxRegion::cube(x.dim(), -2.0, 2.0).unwrap()).unwrap();
        let fx = g.raw_value(&x);
        for v in sd.vertices() {
            for y in grid.points() {
                assert!(v.dot(&y.sub(&x)) + fx <= g.raw_value(&y) + 1e-9);
            }
        }
    }
}

#[test]
fn enlargement_filters_by_hand() {
    let g = f(ABS);
    let samples = eps_enlargement(&g, &p(&[0.5]), 0.75, &line(-2.0, 2.0, 1.0 / 64.0)).unwrap();
    // (0, 0, -1): |0 - 0.5| <= 0.75, f gap 0.5 <= 0.75, <-1, -0.5> = 0.5 <= 0.75.
    assert!(samples.iter().any(|s| s.x == p(&[0.0]) && s.xstar == p(&[-1.0])));
    assert_eq!(sup_support(&samples, &p(&[-1.0])).unwrap(), 1.0);
    for s in &samples {
        let gap = g.raw_value(&p(&[0.5])) - s.fx;
        let pairing = s.xstar.dot(&p(&[0.5]).sub(&s.x));
        assert!((s.x.get(0) - 0.5).abs() <= 0.75 + 1e-12 && gap.abs() <= 0.75 + 1e-12 && pairing <= 0.75 + 1e-12);
    }
}

#[test]
fn link_on_two_valleys() {
    let r = verify_link(&f(TWO_VALLEYS), &p(&[0.0]), &p(&[1.0]), &default_schedule(), &line(-2.0, 2.0, 1.0 / 64.0)).unwrap();
    assert!(r.pass);
    assert_eq!(r.fprime, ExtReal::Finite(-1.0));
    assert!(r.schedule.iter().all(|s| s.sup.unwrap() >= -1.0));
}

#[test]
fn ekeland_point_on_abs() {
    // |y| + 1.25 |y - 0.2| on [-0.2, 0.6]: slopes -2.25, 0.25 then 2.25, so the
    // minimizer is y = 0.2 itself (value 0.2 < 0.25 at y = 0).
    let oracle = (0..=800)
        .map(|i| -0.2 + i as f64 * 0.001)
        .map(|y| (y, y.abs() + 1.25 * (y - 0.2).abs()))
        .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let w = ekeland_point(&f(ABS), &p(&[0.2]), 0.5, 0.4).unwrap();
    assert!((w.x_eps.get(0) - oracle.0).abs() < 1e-9);
    assert!(w.perturbed_min_gap <= 1e-9);

    let l1 = f("max(x1 + x2, x1 - x2, -x1 + x2, -x1 - x2)");
    let w = ekeland_point(&l1, &p(&[0.1, 0.1]), 0.5, 0.5).unwrap();
    assert_eq!(w.x_eps, p(&[0.0, 0.0]));
}

#[test]
fn mean_value_witness_on_abs() {
    // g(t) = |1 - 3t| - t: g(0) = 1, g(1/3) = -1/3, g(1) = 1.
    let w = mean_value_witness(&f(ABS), &p(&[1.0]), &p(&[-2.0]), 1.0).unwrap();
    assert!((w.t0 - 1.0 / 3.0).abs() < 1e-15);
    assert!(w.x0.get(0).abs() < 1e-15);
    assert_eq!(w.dd, ExtReal::Finite(3.0));
    assert!(w.f_x0 <= 1.0 + w.t0 + 1e-12);
}

#[test]
fn optimality_tests_on_two_valleys() {
    let g = f("min(max(x, -x), max(x - 2, 2 - x) + 0.5)");
    let c = BoxRegion::cube(1, -1.0, 3.0).unwrap();
    let grid = GridSpec::default_for(c);
    assert!(brute_force_is_min(&g, &c, &p(&[0.0]), &grid).unwrap());
    assert_eq!(directional_test(&g, &c, &p(&[0.0]), &grid).unwrap().verdict, Verdict::OptimalCertified);

    let a = f(ABS);
    let c = BoxRegion::cube(1, -1.0, 1.0).unwrap();
    let grid = GridSpec::default_for(c);
    let r = directional_test(&a, &c, &p(&[0.5]), &grid).unwrap();
    assert_eq!(r.verdict, Verdict::NotOptimal);
    assert!(r.violations.iter().all(|v| v.fy < 0.5));
    assert!(minty_sufficient(&a, &c, &p(&[0.0]), &grid).unwrap());
    assert!(!minty_sufficient(&a, &c, &p(&[0.5]), &grid).unwrap());
    assert!(subdiff_sufficient(&a, &c, &p(&[0.0]), &grid).unwrap());
}

#[test]
fn planar_refutation_heads_down_the_diagonal() {
    let g = f("max(x1, x2)");
    let u = BoxRegion::cube(2, -1.0, 1.0).unwrap();
    let xbar = p(&[0.5, 0.5]);
    let w = refute_optimality(&g, &u, &xbar, &GridSpec::default_for(u)).unwrap();
    assert!(w.is_valid(1e-7));
    assert!(g.raw_value(&w.y_eps) < 0.5);
    assert!(w.ystar_eps.dot(&xbar.sub(&w.y_eps)) > 0.0);
    assert!(subdiff_contains(&g, &w.y_eps, &w.ystar_eps, 1e-9).unwrap());
}

#[test]
fn abs_graph_and_its_polar() {
    let g = f("max(x, -x) on box(-1,1)");
    let grid = line(-1.0, 1.0, 0.5);
    let t = sample_subdiff_graph(&g, &grid).unwrap();
    // The domain boundary is left out; 0 carries both slopes.
    let pairs: Vec<(f64, f64)> = t.samples().iter().map(|s| (s.x.get(0), s.xstar.get(0))).collect();
    assert_eq!(pairs, vec![(-0.5, -1.0), (0.0, -1.0), (0.0, 1.0), (0.5, 1.0)]);
    assert!(check_monotone(&t, 0.0));
    assert!(monotonically_related(&p(&[0.0]), &p(&[0.5]), &t, 1e-9).unwrap());
    assert!(!monotonically_related(&p(&[0.0]), &p(&[2.0]), &t, 1e-9).unwrap());

    let r = check_absorbing(&g, &line(-1.0, 1.0, 1.0 / 16.0), &dual_grid_for(&g, 1.0 / 16.0).unwrap(), 1e-9).unwrap();
    assert!(r.pass && r.polar_members > 0);
    assert!(check_maximal_monotone(&f("max(2*x + 1, -x) on box(-1,1)"), &line(-1.0, 1.0, 1.0 / 16.0), &dual_grid_for(&f("max(2*x + 1, -x)"), 1.0 / 16.0).unwrap(), 1e-9).unwrap());
}

#[test]
fn parser_examples() {
    assert_eq!(format(&f("abs(x1) + abs(x2)")).matches(',').count(), 3);
    assert_eq!(format(&f("2 * max(x, -x)")), "max(2*x + 0, -2*x + 0)");
    assert_eq!(f("min(x, -x)").components().len(), 2);
    assert_eq!(format(&f("max(x, -x) on box(-1,1)")), "max(1*x + 0, -1*x + 0) on box(-1,1)");
    assert!(matches!(parse("x * y"), Err(Error::Nonlinear { .. })));
}
