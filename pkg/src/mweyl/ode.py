"""Complex ODE integration with dense output, and adaptive quadrature.

The integrator is a Dormand-Prince 5(4) pair specialised to the linear
second-order problems appearing here,

    -y'' + (q - lambda) y - w^2/(u - lambda) y = rhs  on [0, 1],

solved as the first-order system for (y, y'). Every accepted step keeps
the quartic dense-output polynomial, so solutions can be evaluated
anywhere on [0, 1] afterwards (tableau and interpolation weights from
Hairer, Norsett & Wanner, "Solving ODEs I", dopri5).

Quadrature is an adaptive Gauss-Kronrod (G7, K15) panel rule. Declared
jump abscissae become panel boundaries so that piecewise-smooth
integrands (``step`` coefficients, near-singular resolvent kernels)
still converge.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    CoefficientSingularityError,
    QuadratureError,
    StepSizeUnderflowError,
)

__all__ = [
    "SolverSettings",
    "SolutionFn",
    "LinearCombination",
    "QuadResult",
    "solve_hl_ode",
    "quad",
]


@dataclass(frozen=True)
class SolverSettings:
    """Numerical knobs shared by the whole pipeline."""

    rtol: float = 1e-10
    atol: float = 1e-12
    quad_tol: float = 1e-10
    panel_budget: int = 4000
    eps_sing: float = 1e-10
    cond_cap: float = 1e12
    contour_tol: float = 1e-9
    contour_max_nodes: int = 2048
    max_steps: int = 200_000
    search_rtol: float = 1e-6  # coarse tolerance for winding-number field scans

    def validate(self) -> None:
        for name in ("rtol", "atol", "quad_tol", "eps_sing", "contour_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.panel_budget < 1 or self.contour_max_nodes < 16:
            raise ValueError("panel_budget and contour_max_nodes too small")


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4)
# ---------------------------------------------------------------------------

_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_A71, _A73, _A74, _A75, _A76 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# embedded 4th-order error weights
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71 / 57600,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)
# dense-output weights
_D1 = -12715105075 / 11282082432
_D3 = 87487479700 / 32700410799
_D4 = -10690763975 / 1880347072
_D5 = 701980252875 / 199316789632
_D6 = -1453857185 / 822651844
_D7 = 69997945 / 29380423


class SolutionFn:
    """Dense-output solution x -> (y, y') of one linear second-order ODE.

    Accepted steps tile [0, 1]; each keeps the five interpolation
    vectors of the continuous Dormand-Prince extension, so evaluation at
    the step ends reproduces the stored states to rounding.
    """

    __slots__ = ("lam", "fingerprint", "xl", "xr", "cont", "nsteps")

    def __init__(self, lam: complex, fingerprint: str, xl, xr, cont):
        self.lam = lam
        self.fingerprint = fingerprint
        self.xl = np.asarray(xl, dtype=float)
        self.xr = np.asarray(xr, dtype=float)
        self.cont = np.asarray(cont, dtype=complex)  # (nsteps, 5, 2)
        self.nsteps = len(self.xl)

    @property
    def state0(self) -> tuple[complex, complex]:
        r = self.cont[0, 0]
        return complex(r[0]), complex(r[1])

    @property
    def state1(self) -> tuple[complex, complex]:
        r = self.cont[-1, 0] + self.cont[-1, 1]
        return complex(r[0]), complex(r[1])

    def eval_many(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        xs = np.asarray(xs, dtype=float)
        idx = np.searchsorted(self.xr, xs, side="left")
        idx = np.clip(idx, 0, self.nsteps - 1)
        xa = self.xl[idx]
        h = self.xr[idx] - xa
        theta = (xs - xa) / h
        c = self.cont[idx]  # (m, 5, 2)
        t = theta[:, None]
        vals = c[:, 0] + t * (c[:, 1] + (1 - t) * (c[:, 2] + t * (c[:, 3] + (1 - t) * c[:, 4])))
        return vals[:, 0], vals[:, 1]

    def eval(self, x: float) -> tuple[complex, complex]:
        i = int(np.searchsorted(self.xr, x, side="left"))
        if i >= self.nsteps:
            i = self.nsteps - 1
        xa = self.xl[i]
        theta = (x - xa) / (self.xr[i] - xa)
        c = self.cont[i]
        t = theta
        v = c[0] + t * (c[1] + (1 - t) * (c[2] + t * (c[3] + (1 - t) * c[4])))
        return complex(v[0]), complex(v[1])

    def y(self, xs: np.ndarray) -> np.ndarray:
        return self.eval_many(np.asarray(xs, dtype=float))[0]

    def dy(self, xs: np.ndarray) -> np.ndarray:
        return self.eval_many(np.asarray(xs, dtype=float))[1]


class LinearCombination:
    """Pointwise linear combination of dense-output solutions."""

    __slots__ = ("terms", "lam")

    def __init__(self, terms: Sequence[tuple[complex, "SolutionFn | LinearCombination"]]):
        self.terms = tuple((complex(c), s) for c, s in terms)
        self.lam = self.terms[0][1].lam if self.terms else 0j

    @property
    def state0(self):
        y = sum(c * s.state0[0] for c, s in self.terms)
        dy = sum(c * s.state0[1] for c, s in self.terms)
        return y, dy

    @property
    def state1(self):
        y = sum(c * s.state1[0] for c, s in self.terms)
        dy = sum(c * s.state1[1] for c, s in self.terms)
        return y, dy

    def eval_many(self, xs):
        xs = np.asarray(xs, dtype=float)
        ys = np.zeros(xs.shape, dtype=complex)
        dys = np.zeros(xs.shape, dtype=complex)
        for c, s in self.terms:
            y, dy = s.eval_many(xs)
            ys += c * y
            dys += c * dy
        return ys, dys

    def eval(self, x):
        y = 0j
        dy = 0j
        for c, s in self.terms:
            yv, dyv = s.eval(x)
            y += c * yv
            dy += c * dyv
        return y, dy


def coefficient_scalar(problem, lam: complex) -> Callable[[float], complex]:
    """Scalar closure for c(x) = q - lambda - w^2/(u - lambda) with the
    singularity guard: where |u - lambda| <= eps_sing the coupling term is
    dropped if |w| < eps_sing and rejected otherwise."""
    q = problem.q.eval_scalar
    eps = problem.settings.eps_sing
    if problem.w.is_zero():
        return lambda x: q(x) - lam

    w = problem.w.eval_scalar
    u = problem.u.eval_scalar

    def coeff(x: float) -> complex:
        t = u(x) - lam
        wv = w(x)
        if abs(t) > eps:
            return q(x) - lam - wv * wv / t
        if abs(wv) < eps:
            return q(x) - lam
        raise CoefficientSingularityError(x, lam)

    return coeff


def coefficient_vector(problem, lam: complex) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorised version of :func:`coefficient_scalar`."""
    q = problem.q.eval_vector
    eps = problem.settings.eps_sing
    if problem.w.is_zero():
        return lambda xs: q(xs) - lam

    w = problem.w.eval_vector
    u = problem.u.eval_vector

    def coeff(xs: np.ndarray) -> np.ndarray:
        t = u(xs) - lam
        wv = w(xs)
        small = np.abs(t) <= eps
        if np.any(small & (np.abs(wv) >= eps)):
            bad = np.asarray(small & (np.abs(wv) >= eps)).reshape(-1)
            raise CoefficientSingularityError(
                float(np.asarray(xs).reshape(-1)[np.argmax(bad)]), lam
            )
        safe_t = np.where(small, 1.0, t)
        coupling = np.where(small, 0.0, wv * wv / safe_t)
        return q(xs) - lam - coupling

    return coeff


def solve_hl_ode(problem, lam: complex, y0: complex, dy0: complex,
                 rhs: Callable[[float], complex] | None = None) -> SolutionFn:
    """Integrate -y'' + (q - lambda) y - w^2/(u - lambda) y = rhs on [0, 1].

    ``rhs`` is an optional scalar evaluable (the inhomogeneous resolvent
    equation); ``rhs=None`` solves the homogeneous equation. Initial
    data are y(0) = y0, y'(0) = dy0. Tolerances come from
    ``problem.settings``.
    """
    coeff = coefficient_scalar(problem, lam)
    if rhs is None:
        def f(x: float, y: complex, dy: complex) -> tuple[complex, complex]:
            return dy, coeff(x) * y
    else:
        def f(x: float, y: complex, dy: complex) -> tuple[complex, complex]:
            return dy, coeff(x) * y - rhs(x)

    return _integrate(f, complex(y0), complex(dy0), problem.settings, lam,
                      problem.fingerprint())


def _integrate(f, y0: complex, dy0: complex, settings: SolverSettings,
               lam: complex, fingerprint: str) -> SolutionFn:
    rtol, atol = settings.rtol, settings.atol
    x = 0.0
    y, dy = y0, dy0
    k1 = f(x, y, dy)
    h = 0.01
    xl: list[float] = []
    xr: list[float] = []
    cont: list[tuple] = []
    steps = 0
    while x < 1.0:
        if h < 1e-14:
            raise StepSizeUnderflowError(x)
        steps += 1
        if steps > settings.max_steps:
            raise StepSizeUnderflowError(x)
        if x + h > 1.0:
            h = 1.0 - x

        k1a, k1b = k1
        k2 = f(x + _C2 * h, y + h * _A21 * k1a, dy + h * _A21 * k1b)
        k2a, k2b = k2
        k3 = f(x + _C3 * h, y + h * (_A31 * k1a + _A32 * k2a),
               dy + h * (_A31 * k1b + _A32 * k2b))
        k3a, k3b = k3
        k4 = f(x + _C4 * h, y + h * (_A41 * k1a + _A42 * k2a + _A43 * k3a),
               dy + h * (_A41 * k1b + _A42 * k2b + _A43 * k3b))
        k4a, k4b = k4
        k5 = f(x + _C5 * h,
               y + h * (_A51 * k1a + _A52 * k2a + _A53 * k3a + _A54 * k4a),
               dy + h * (_A51 * k1b + _A52 * k2b + _A53 * k3b + _A54 * k4b))
        k5a, k5b = k5
        k6 = f(x + h,
               y + h * (_A61 * k1a + _A62 * k2a + _A63 * k3a + _A64 * k4a + _A65 * k5a),
               dy + h * (_A61 * k1b + _A62 * k2b + _A63 * k3b + _A64 * k4b + _A65 * k5b))
        k6a, k6b = k6
        ynew = y + h * (_A71 * k1a + _A73 * k3a + _A74 * k4a + _A75 * k5a + _A76 * k6a)
        dynew = dy + h * (_A71 * k1b + _A73 * k3b + _A74 * k4b + _A75 * k5b + _A76 * k6b)
        k7 = f(x + h, ynew, dynew)
        k7a, k7b = k7

        erra = h * (_E1 * k1a + _E3 * k3a + _E4 * k4a + _E5 * k5a + _E6 * k6a + _E7 * k7a)
        errb = h * (_E1 * k1b + _E3 * k3b + _E4 * k4b + _E5 * k5b + _E6 * k6b + _E7 * k7b)
        sca = atol + rtol * max(abs(y), abs(ynew))
        scb = atol + rtol * max(abs(dy), abs(dynew))
        err = ((abs(erra) / sca) ** 2 + (abs(errb) / scb) ** 2) ** 0.5 * 0.7071067811865476

        if err <= 1.0:
            da = ynew - y
            db = dynew - dy
            r3a = h * k1a - da
            r3b = h * k1b - db
            r4a = da - h * k7a - r3a
            r4b = db - h * k7b - r3b
            r5a = h * (_D1 * k1a + _D3 * k3a + _D4 * k4a + _D5 * k5a + _D6 * k6a + _D7 * k7a)
            r5b = h * (_D1 * k1b + _D3 * k3b + _D4 * k4b + _D5 * k5b + _D6 * k6b + _D7 * k7b)
            xl.append(x)
            xr.append(x + h)
            cont.append(((y, dy), (da, db), (r3a, r3b), (r4a, r4b), (r5a, r5b)))
            x += h
            y, dy = ynew, dynew
            k1 = k7
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h *= fac
        else:
            h *= max(0.2, 0.9 * err ** -0.2)

    return SolutionFn(lam, fingerprint, xl, xr, cont)


# ---------------------------------------------------------------------------
# Gauss-Kronrod (G7, K15) adaptive quadrature
# ---------------------------------------------------------------------------

_XGK_HALF = (
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
)
_WGK_HALF = (
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
)
_WG_HALF = (
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
)

_GK_NODES = np.array([-v for v in _XGK_HALF[:7]] + [0.0] + [v for v in reversed(_XGK_HALF[:7])])
_GK_WEIGHTS = np.array(list(_WGK_HALF[:7]) + [_WGK_HALF[7]] + list(reversed(_WGK_HALF[:7])))
_G_WEIGHTS = np.zeros(15)
_G_WEIGHTS[1:14:2] = list(_WG_HALF[:3]) + [_WG_HALF[3]] + list(reversed(_WG_HALF[:3]))


@dataclass
class QuadResult:
    value: complex
    error: float
    panels: int
    converged: bool = True


def _gk_panel(f, a: float, b: float) -> tuple[complex, float]:
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    xs = mid + half * _GK_NODES
    vals = f(xs)
    vals = np.asarray(vals, dtype=complex)
    if not np.all(np.isfinite(vals)):
        bad = ~np.isfinite(vals)
        raise QuadratureError(float(xs[np.argmax(bad)]))
    resk = half * np.sum(_GK_WEIGHTS * vals)
    resg = half * np.sum(_G_WEIGHTS * vals)
    return complex(resk), abs(resk - resg)


def quad(f, jump_points: Sequence[float] = (), tol: float = 1e-10,
         panel_budget: int = 4000) -> QuadResult:
    """Integrate a (vectorised) complex integrand over [0, 1].

    Panels never straddle a declared jump point. The worst panel by the
    K15-G7 error estimate is bisected until the total estimate drops
    below ``tol * max(1, |value|)`` or the budget runs out. On budget
    exhaustion the partial value is returned with ``converged=False``
    and the remaining estimate; it is never raised as an error.
    """
    edges = [0.0]
    for p in sorted(set(float(j) for j in jump_points)):
        if 0.0 < p < 1.0 and p - edges[-1] > 1e-14:
            edges.append(p)
    if 1.0 - edges[-1] > 1e-14:
        edges.append(1.0)
    else:
        edges[-1] = 1.0

    heap: list[tuple[float, int, float, float, complex, float]] = []
    seq = 0
    total = 0j
    total_err = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, err = _gk_panel(f, a, b)
        total += val
        total_err += err
        heapq.heappush(heap, (-err, seq, a, b, val, err))
        seq += 1

    panels = len(heap)
    while total_err > tol * max(1.0, abs(total)) and panels < panel_budget:
        neg_err, _, a, b, val, err = heapq.heappop(heap)
        if b - a < 1e-15:
            # cannot refine further; put it back and stop
            heapq.heappush(heap, (neg_err, seq, a, b, val, err))
            seq += 1
            break
        mid = 0.5 * (a + b)
        val1, err1 = _gk_panel(f, a, mid)
        val2, err2 = _gk_panel(f, mid, b)
        total += val1 + val2 - val
        total_err += err1 + err2 - err
        heapq.heappush(heap, (-err1, seq, a, mid, val1, err1))
        seq += 1
        heapq.heappush(heap, (-err2, seq, mid, b, val2, err2))
        seq += 1
        panels += 1

    converged = total_err <= tol * max(1.0, abs(total))
    return QuadResult(complex(total), float(total_err), panels, converged)
