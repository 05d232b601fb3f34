"""Cartesian and Riemannian vector calculus on expression fields.

Residual checks for curl u = f u, the explicit solution for affine factors,
the second-order elliptic identity, curl with respect to an arbitrary metric,
and the pullback of a field to the adapted chart coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import expr as ex
from .chart import ChartData
from .errors import DomainError
from .expr import Add, Div, Func, Mul, Num, Pow, Var, VectorExpr
from .series import compose3


@dataclass(frozen=True)
class PointSample:
    """Residuals of a candidate solution pair (u, f) at one point."""

    point: tuple
    value: tuple
    beltrami: float  # |curl u - f u| + |div u|, scale-normalized
    elliptic: float

    def __post_init__(self):
        if self.beltrami < 0 or self.elliptic < 0:
            raise DomainError("residuals must be non-negative")


def sample_point(u: VectorExpr, f, bindings, p) -> PointSample:
    value = tuple(float(ex.evaluate(c, bindings, p)) for c in u.components)
    return PointSample(
        point=tuple(float(c) for c in p),
        value=value,
        beltrami=beltrami_residual(u, f, bindings, p),
        elliptic=elliptic_residual(u, f, bindings, p),
    )


def _component_jets(u: VectorExpr, bindings, p, order, mode="double"):
    return [ex.jet(c, bindings, p, order, mode=mode) for c in u.components]


def gradient(f, bindings, p, mode="double"):
    j = ex.jet(f, bindings, p, 1, mode=mode)
    return np.array(
        [j.coeff((1, 0, 0)), j.coeff((0, 1, 0)), j.coeff((0, 0, 1))],
        dtype=object if mode == "rational" else np.float64,
    )


def curl_div(u: VectorExpr, bindings, p, mode="double"):
    """(curl u, div u) at a point from first-order jets of the components."""
    jets = _component_jets(u, bindings, p, 1, mode=mode)
    e = [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
    d = [[jets[i].coeff(e[j]) for j in range(3)] for i in range(3)]  # d[i][j] = dj u_i
    curl = np.array(
        [d[2][1] - d[1][2], d[0][2] - d[2][0], d[1][0] - d[0][1]],
        dtype=object if mode == "rational" else np.float64,
    )
    div = d[0][0] + d[1][1] + d[2][2]
    return curl, div


def beltrami_residual(u: VectorExpr, f, bindings, p) -> float:
    """|curl u - f u| + |div u| at p, relative when the field is large."""
    curl, div = curl_div(u, bindings, p)
    fu = ex.evaluate(f, bindings, p) * np.array(
        [ex.evaluate(c, bindings, p) for c in u.components]
    )
    res = float(np.linalg.norm(curl - fu)) + abs(float(div))
    scale = max(1.0, float(np.linalg.norm(fu)))
    return res / scale


def affine_field(const, direction, u0) -> VectorExpr:
    """Explicit solution for an affine factor f = const + direction . x.

    ``u0`` must be orthogonal to ``direction``; the field rotates u0 in the
    plane orthogonal to the gradient with phase f^2 / (2 |direction|), which
    gives curl u = f u and div u = 0 identically.
    """
    e = np.asarray(direction, dtype=np.float64)
    u0 = np.asarray(u0, dtype=np.float64)
    norm_e = float(np.linalg.norm(e))
    if norm_e == 0:
        raise DomainError("direction vector must be nonzero")
    if abs(float(np.dot(u0, e))) > 1e-12 * max(1.0, float(np.linalg.norm(u0))) * norm_e:
        raise DomainError(f"u0 = {tuple(u0)} is not orthogonal to {tuple(e)}")
    w = np.cross(u0, e) / norm_e
    body = Num(float(const))
    for i in range(3):
        if e[i] != 0:
            body = Add(body, Mul(Num(float(e[i])), Var(i)))
    phase = Div(Pow(body, 2), Num(2.0 * norm_e))
    comps = []
    for i in range(3):
        comps.append(
            Add(
                Mul(Num(float(u0[i])), Func("cos", phase)),
                Mul(Num(float(w[i])), Func("sin", phase)),
            )
        )
    return VectorExpr(tuple(comps))


def affine_solution(a: float, u0, p):
    """Value at p of the explicit solution for f = 1 + a*x1 + x3."""
    field = affine_field(1.0, (float(a), 0.0, 1.0), u0)
    return np.array([ex.evaluate(c, None, p) for c in field.components])


def elliptic_residual(u: VectorExpr, f, bindings, p) -> float:
    """|Lap u + grad f x u + f^2 u| at p (relative for large fields)."""
    jets = _component_jets(u, bindings, p, 2)
    lap = np.array(
        [
            2.0 * (j.coeff((2, 0, 0)) + j.coeff((0, 2, 0)) + j.coeff((0, 0, 2)))
            for j in jets
        ]
    )
    gf = gradient(f, bindings, p)
    uval = np.array([float(j.constant_term()) for j in jets])
    fval = ex.evaluate(f, bindings, p)
    res = lap + np.cross(gf.astype(np.float64), uval) + fval * fval * uval
    scale = max(1.0, float(np.linalg.norm(uval)) * max(1.0, fval * fval))
    return float(np.linalg.norm(res)) / scale


def conformal_metric(f) -> tuple:
    """The metric f^2 * (Euclidean) as a 3x3 grid of expressions."""
    zero = Num(Fraction(0))
    fsq = Pow(f, 2)
    return tuple(
        tuple(fsq if i == j else zero for j in range(3)) for i in range(3)
    )


def riemannian_curl(metric, v: VectorExpr, bindings, p):
    """curl of v for an arbitrary metric, via d(v-flat) = (curl v) contracted
    into the metric volume form.

    Needs first-order jets of the metric entries and of v; the metric must be
    symmetric positive definite at p.
    """
    gj = [[ex.jet(metric[i][j], bindings, p, 1) for j in range(3)] for i in range(3)]
    g0 = np.array([[float(gj[i][j].constant_term()) for j in range(3)] for i in range(3)])
    if not np.allclose(g0, g0.T, atol=1e-12):
        raise DomainError("metric is not symmetric at the point")
    eig = np.linalg.eigvalsh(g0)
    if eig.min() <= 0:
        raise DomainError(f"metric is not positive definite at the point (eigs {eig})")
    vj = _component_jets(v, bindings, p, 1)
    # alpha_i = g_ij v^j as order-1 jets
    alpha = []
    for i in range(3):
        s = gj[i][0] * vj[0] + gj[i][1] * vj[1] + gj[i][2] * vj[2]
        alpha.append(s)
    e = [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
    d = [[float(alpha[j].coeff(e[i])) for j in range(3)] for i in range(3)]  # d[i][j] = di alpha_j
    sqrt_det = math.sqrt(float(np.linalg.det(g0)))
    return (
        np.array(
            [d[1][2] - d[2][1], d[2][0] - d[0][2], d[0][1] - d[1][0]],
            dtype=np.float64,
        )
        / sqrt_det
    )


def chart_pullback(u: VectorExpr, chart: ChartData, bindings=None):
    """Components (beta_1, beta_2, beta_t) of the Euclidean dual form of u in
    chart coordinates: beta_i = u(x(t, xi)) . d_i x."""
    order = chart.order
    mode = chart.bp.mode
    xw = chart.x_world()
    jets = [
        ex.jet(c, bindings, chart.bp.point, order, mode=mode) for c in u.components
    ]
    pulled = [compose3(j, xw) for j in jets]

    def dot_with(partial_var):
        dxw = [s.derive(partial_var) for s in xw]
        out = None
        for k in range(3):
            term = pulled[k].truncate(order - 1) * dxw[k]
            out = term if out is None else out + term
        return out

    beta1 = dot_with("xi1")
    beta2 = dot_with("xi2")
    beta_t = dot_with("t")
    return beta1, beta2, beta_t


def pullback_system_residuals(u: VectorExpr, chart: ChartData, T, bindings=None) -> dict:
    """Max coefficient residuals of the chart-coordinate system for a field:
    the two evolution rows, the closedness constraint, and the dt-component."""
    beta1, beta2, beta_t = chart_pullback(u, chart, bindings)
    order = min(beta1.order, T.order) - 1
    b1, b2 = beta1.truncate(order + 1), beta2.truncate(order + 1)
    Tm = T.truncate(order + 1)
    row1 = b1.derive("t") - (Tm.entry(0, 0) * b1 + Tm.entry(0, 1) * b2).truncate(order)
    row2 = b2.derive("t") - (Tm.entry(1, 0) * b1 + Tm.entry(1, 1) * b2).truncate(order)
    closed = b2.derive("xi1") - b1.derive("xi2")
    return {
        "evolution_row1": row1.max_abs(),
        "evolution_row2": row2.max_abs(),
        "closedness": closed.max_abs(),
        "beta_t": beta_t.max_abs(),
    }
