import math

import numpy as np
import pytest

from fblmpc.conic import Affine, ConicProblem, dot, lin_sum


def test_soc_distance_to_point():
    p = ConicProblem()
    t = p.add_variables(1, "t")
    p.add_soc(t[0], [1.0, 1.0])
    p.minimize(t[0])
    res = p.solve()
    assert res.ok and res.value(t[0]) == pytest.approx(math.sqrt(2), abs=1e-8)


def test_inverse_sqrt_epigraph():
    p = ConicProblem()
    x = p.add_variables(2, "x")
    p.add_inv_sqrt_epigraph(x[0], x[1])
    p.add_zero(x[1] - 4.0)
    p.minimize(x[0])
    res = p.solve()
    assert res.ok and res.value(x[0]) == pytest.approx(0.5, abs=1e-8)


def test_cubic_epigraph():
    p = ConicProblem()
    x = p.add_variables(2, "x")
    p.add_cubic_epigraph(x[0], x[1])
    p.add_linear(x[1], 2.0, "==")
    p.minimize(x[0])
    res = p.solve()
    assert res.ok and res.value(x[0]) == pytest.approx(8.0, rel=1e-8)


def test_one_dimensional_soc_is_absolute_value():
    p = ConicProblem()
    x = p.add_variables(2, "x")
    # |x0 - 3| <= x1, minimize x1 + 0*x0 with x0 fixed at 1 -> 2
    p.add_soc(x[1], [x[0] - 3.0])
    p.add_zero(x[0] - 1.0)
    p.minimize(x[1])
    assert p.solve().value(x[1]) == pytest.approx(2.0, abs=1e-8)


def test_rotated_cone_and_quadratic_epigraph():
    p = ConicProblem()
    x = p.add_variables(3, "x")
    p.add_quad_epigraph(x[0], [x[1] - 1.0, x[2] + 2.0])
    p.minimize(x[0] + 0.5 * x[1])
    res = p.solve()
    # optimum: x2 = -2, x1 = 1 - 0.25, value 0.0625 + 0.5*0.75
    assert res.objective == pytest.approx(0.0625 + 0.375, abs=1e-8)


def test_infeasible_and_unbounded():
    p = ConicProblem()
    x = p.add_variables(1)
    p.add_linear(x[0], 1.0, ">=")
    p.add_linear(x[0], 0.0, "<=")
    p.minimize(x[0])
    res = p.solve()
    assert res.status == "infeasible" and res.x is None
    with pytest.raises(ValueError):
        res.value(x[0])
    q = ConicProblem()
    y = q.add_variables(1)
    q.maximize(y[0])
    q.add_nonneg(y[0])
    assert q.solve().status == "unbounded"


def test_objective_matches_primal_and_is_deterministic():
    def build():
        p = ConicProblem()
        x = p.add_variables(3)
        p.add_soc(3.0, [x[0], x[1], x[2]])
        p.maximize(dot([1.0, 2.0, -2.0], list(x), 1.0))
        return p, x

    p, x = build()
    r1 = p.solve()
    assert r1.objective == pytest.approx(1.0 + 3.0 * 3.0, abs=1e-7)
    vals = x.value(r1.x)
    assert r1.objective == pytest.approx(1.0 + vals[0] + 2 * vals[1] - 2 * vals[2], abs=1e-8)
    r2 = build()[0].solve()
    assert r2.objective == pytest.approx(r1.objective, abs=1e-8) and r2.status == r1.status


def test_affine_algebra():
    a = Affine([0, 1], [2.0, 3.0], 1.0)
    b = Affine([1], [1.0], -1.0)
    x = np.array([1.0, 2.0])
    assert (a + b).value(x) == pytest.approx(9.0 + 2.0 - 1.0)
    assert (a - b).value(x) == pytest.approx(9.0 - 1.0)
    assert (2 * a / 4).value(x) == pytest.approx(4.5)
    assert (3 - a).value(x) == pytest.approx(-6.0)
    assert lin_sum([a, b, 2.0]).value(x) == pytest.approx(12.0)
    with pytest.raises(TypeError):
        a * b


def test_bad_inputs():
    p = ConicProblem()
    x = p.add_variables(1)
    with pytest.raises(ValueError):
        p.add_power(x[0], 1.0, 1.0, 1.5)
    with pytest.raises(ValueError):
        p.add_nonneg(Affine([5], [1.0]))
    with pytest.raises(ValueError):
        p.add_linear(x[0], 1.0, "<>")
    with pytest.raises(IndexError):
        x[3]


def test_dump_lists_cones_and_rows():
    p = ConicProblem()
    x = p.add_variables(2)
    p.add_soc(x[0], [x[1]])
    p.add_inv_sqrt_epigraph(x[0], x[1])
    p.minimize(x[0])
    text = p.dump()
    assert "cone soc 2" in text and "cone pow 3 0.6666666666666666" in text
    assert text.startswith("vars 2\nrows 5\n")
