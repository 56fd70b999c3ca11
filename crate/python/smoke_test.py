"""Smoke test for the Python bindings.

Build and install first, e.g.
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist && pip install dist/*.whl
then run `python python/smoke_test.py`.
"""

import math

import subdiff_lab as sl

ABS = "max(x, -x)"
TWO_VALLEYS = "min(max(x - 1, 1 - x), max(x + 1, -x - 1))"


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol


def main():
    assert sl.normalize(ABS) == "max(1*x + 0, -1*x + 0)"
    assert close(sl.evaluate(ABS, [0.5]), 0.5)
    assert math.isinf(sl.evaluate("max(x, -x) on box(0,1)", [2.0]))
    assert close(sl.evaluate(TWO_VALLEYS, [0.0]), 1.0)

    assert close(sl.directional_derivative(ABS, [0.0], [1.0]), 1.0)
    assert close(sl.directional_derivative(TWO_VALLEYS, [0.0], [1.0]), -1.0)
    assert sorted(sl.subdifferential(ABS, [0.0])) == [[-1.0], [1.0]]
    assert sorted(sl.subdifferential("max(x1, x2)", [0.0, 0.0])) == [[0.0, 1.0], [1.0, 0.0]]

    samples = sl.eps_enlargement(ABS, [0.5], 0.1, h=0.01)
    assert samples and all(s["xstar"] == [1.0] for s in samples)

    link = sl.verify_link(ABS, [0.0], [1.0])
    assert link["pass"] and link["convex_equal"] == 0.0

    w = sl.ekeland_point("max(x1 + x2, x1 - x2, -x1 + x2, -x1 - x2)", [0.1, 0.1], 0.5, 0.5)
    assert w["x_eps"] == [0.0, 0.0] and w["perturbed_min_gap"] <= 1e-9

    m = sl.mean_value_witness(ABS, [1.0], [-2.0], 1.0)
    assert close(m["t0"], 1.0 / 3.0) and m["dd"] == 3.0

    assert sl.directional_test(ABS, [0.0], region="box(-1,1)")["verdict"] == "OptimalCertified"
    assert sl.subdiff_test(ABS, [0.5], region="box(-1,1)")["verdict"] == "NotOptimal"
    r = sl.refute_optimality(ABS, [0.5], region="box(-1,1)")
    assert r["f_yeps"] < 0.5 and r["inner"] > 0.0
    try:
        sl.refute_optimality(ABS, [0.0], region="box(-1,1)")
        raise AssertionError("a minimizer cannot be refuted")
    except ValueError:
        pass

    assert sl.check_absorbing("max(x, -x) on box(-1,1)", h=0.125)["pass"]
    assert sl.check_maximal_monotone("max(2*x + 1, -x) on box(-1,1)", h=0.125)

    assert sl.generate_instance(0, 1, True, 2) == sl.generate_instance(0, 1, True, 2)
    try:
        sl.normalize("x * y")
        raise AssertionError("nonlinear input must be rejected")
    except ValueError as e:
        assert "line 1" in str(e)

    report = sl.run_suite(seed=42, quick=True)
    assert report["schema"] == "subdiff-lab-report/1"
    assert len(report["criteria"]) == 12
    for c in report["criteria"]:
        print(f"{'PASS' if c['pass'] else 'FAIL'} {c['id']:>2} {c['label']}")
    assert report["pass"]
    print("smoke test ok")


if __name__ == "__main__":
    main()
