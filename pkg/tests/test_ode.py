import cmath
import math
from dataclasses import dataclass, replace

import numpy as np
import pytest

from mweyl.errors import CoefficientSingularityError
from mweyl.expressions import CoefficientExpr, parse
from mweyl.ode import LinearCombination, SolverSettings, quad, solve_hl_ode


@dataclass(frozen=True)
class StubProblem:
    q: CoefficientExpr
    w: CoefficientExpr
    u: CoefficientExpr
    settings: SolverSettings = SolverSettings()

    def fingerprint(self) -> str:
        return "stub"


def free_problem(settings: SolverSettings = SolverSettings()) -> StubProblem:
    return StubProblem(parse("0"), parse("0"), parse("0"), settings)


def test_free_equation_is_linear_function():
    sol = solve_hl_ode(free_problem(), 0.0, 0.0, 1.0)
    xs = np.linspace(0, 1, 37)
    y, dy = sol.eval_many(xs)
    assert np.max(np.abs(y - xs)) < 1e-10
    assert np.max(np.abs(dy - 1.0)) < 1e-10


def test_sine_solution_at_pi_squared():
    lam = math.pi ** 2
    sol = solve_hl_ode(free_problem(), lam, 0.0, 1.0)
    y1, dy1 = sol.eval(1.0)
    # closed form: y = sin(sqrt(lam) x)/sqrt(lam)
    assert abs(y1 - math.sin(math.pi) / math.pi) < 1e-8
    assert abs(dy1 - math.cos(math.pi)) < 1e-8


def test_tolerance_controls_endpoint_error():
    lam = math.pi ** 2
    errs = []
    for rtol in (1e-5, 1e-7, 1e-9):
        settings = SolverSettings(rtol=rtol, atol=rtol * 1e-2)
        sol = solve_hl_ode(free_problem(settings), lam, 0.0, 1.0)
        y1, _ = sol.eval(1.0)
        errs.append(abs(y1 - math.sin(math.pi) / math.pi))
    assert errs[1] < errs[0]
    assert errs[2] < errs[1]
    assert errs[2] < errs[0] / 100.0


def test_dense_output_matches_stored_states():
    lam = 2.0 + 1.5j
    prob = StubProblem(parse("x"), parse("0.5"), parse("2+x"))
    sol = solve_hl_ode(prob, lam, 1.0, 0.5j)
    for i in range(sol.nsteps):
        xa, xb = sol.xl[i], sol.xr[i]
        ya, dya = sol.eval(float(xa))
        r = sol.cont[i, 0]
        assert abs(ya - r[0]) < 1e-13 * max(1, abs(r[0]))
        assert abs(dya - r[1]) < 1e-13 * max(1, abs(r[1]))
        yb, dyb = sol.eval(float(xb))
        rb = sol.cont[i, 0] + sol.cont[i, 1]
        assert abs(yb - rb[0]) < 1e-12 * max(1, abs(rb[0]))
        assert abs(dyb - rb[1]) < 1e-12 * max(1, abs(rb[1]))


def test_steps_tile_unit_interval():
    sol = solve_hl_ode(free_problem(), 5.0 + 1j, 1.0, 0.0)
    assert sol.xl[0] == 0.0
    assert sol.xr[-1] == 1.0
    assert np.all(sol.xl[1:] == sol.xr[:-1])


def test_linearity():
    prob = StubProblem(parse("x"), parse("0.3"), parse("2+x"))
    lam = 1.0 + 2.0j
    a, b = 0.7 - 0.2j, 1.3 + 0.4j
    s1 = solve_hl_ode(prob, lam, 1.0, 0.0)
    s2 = solve_hl_ode(prob, lam, 0.0, 1.0)
    s3 = solve_hl_ode(prob, lam, a, b)
    rng = np.random.default_rng(7)
    xs = rng.uniform(0, 1, size=20)
    comb = LinearCombination([(a, s1), (b, s2)])
    yc, dyc = comb.eval_many(xs)
    y3, dy3 = s3.eval_many(xs)
    assert np.max(np.abs(yc - y3)) < 1e-9
    assert np.max(np.abs(dyc - dy3)) < 1e-9


def test_wronskian_constant():
    prob = StubProblem(parse("x^2"), parse("0.4"), parse("3+x"))
    lam = 2.5 + 0.5j
    s1 = solve_hl_ode(prob, lam, 1.0, 0.0)
    s2 = solve_hl_ode(prob, lam, 0.0, 1.0)
    xs = np.linspace(0, 1, 41)
    y1, dy1 = s1.eval_many(xs)
    y2, dy2 = s2.eval_many(xs)
    w = y1 * dy2 - dy1 * y2
    assert np.max(np.abs(w - w[0])) < 1e-8 * max(1.0, float(np.max(np.abs(w))))


def test_singularity_guard():
    # u crosses lambda where w is nonzero
    prob = StubProblem(parse("0"), parse("1"), parse("x"))
    with pytest.raises(CoefficientSingularityError):
        solve_hl_ode(prob, 0.5, 0.0, 1.0)


def test_singularity_guard_allows_w_gap():
    # w vanishes identically around the crossing point u = 0.5
    prob = StubProblem(parse("0"), parse("step(x-0.75)"), parse("x"))
    sol = solve_hl_ode(prob, 0.5, 0.0, 1.0)
    assert np.isfinite(sol.eval(1.0)[0].real)


def test_inhomogeneous_constant_solution():
    # -y'' - lam y = 1 with lam = -1 has particular solution y = 1
    prob = free_problem()
    sol = solve_hl_ode(prob, -1.0, 1.0, 0.0, rhs=lambda x: 1.0)
    xs = np.linspace(0, 1, 11)
    y, dy = sol.eval_many(xs)
    assert np.max(np.abs(y - 1.0)) < 1e-10
    assert np.max(np.abs(dy)) < 1e-10


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def test_quad_constant():
    res = quad(lambda xs: np.ones_like(xs, dtype=complex))
    assert res.value == pytest.approx(1.0, abs=1e-14)


def test_quad_x_squared():
    res = quad(lambda xs: xs.astype(complex) ** 2)
    assert abs(res.value - 1.0 / 3.0) < 1e-12


def test_quad_near_singular_against_antiderivative():
    pole = 0.5 + 0.01j
    res = quad(lambda xs: 1.0 / (xs - pole), tol=1e-12)
    want = cmath.log(1.0 - pole) - cmath.log(-pole)
    assert abs(res.value - want) < 1e-10


def test_quad_polynomial_exactness():
    # K15 integrates degree <= 22 exactly on a single panel
    for deg in (5, 10, 15, 22):
        res = quad(lambda xs, d=deg: xs.astype(complex) ** d, tol=1e-3)
        assert abs(res.value - 1.0 / (deg + 1)) < 1e-13


def test_quad_respects_declared_jumps():
    expr = parse("step(x-0.3)")
    res = quad(lambda xs: expr.eval(xs), jump_points=expr.jump_points(), tol=1e-12)
    assert abs(res.value - 0.7) < 1e-12


def test_quad_budget_returns_partial():
    pole = 0.5 + 1e-6j
    res = quad(lambda xs: 1.0 / (xs - pole), tol=1e-13, panel_budget=8)
    assert res.panels <= 8
    assert not res.converged
    assert res.error > 0
    assert np.isfinite(res.value.real)


def test_quad_error_estimate_nonnegative():
    res = quad(lambda xs: np.sin(7 * xs).astype(complex))
    assert res.error >= 0
    assert res.value == pytest.approx((1 - math.cos(7)) / 7, abs=1e-12)
