"""The evolution tensor T, its recursion, and the determinant obstructions.

For a solution dual 1-form beta on the adapted chart, the evolution is
``d/dt beta = T(t) beta`` with

    T = (c0 + t) * chi * sqrt(det g) * [[g^12, g^22], [-g^11, -g^12]]

acting on the component column (beta_1, beta_2); entry ``(row, col)`` of the
matrix is the tensor component with lower index row+1 and upper index col+1.
The recursion ``T_{n+1} = dT_n/dt + T_n T`` generates the coefficients of the
higher time derivatives of beta, and each one yields a linear constraint
``script_T(n) . (beta_1, beta_2, d1 beta_1, d2 beta_1) = 0`` on closed data.
Four of those constraint vectors can only admit a nonzero solution if their
4x4 determinant vanishes: that determinant, restricted to t = 0, is the
obstruction polynomial evaluated here.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from .chart import ChartData, build_chart
from .errors import BudgetError, DomainError
from .series import SeriesMatrix2, TruncatedSeries

DEFAULT_INDICES = (2, 3, 4, 5)


@dataclass(frozen=True)
class ConstraintVector4:
    """Four series components multiplying (beta1, beta2, d1 beta1, d2 beta1)."""

    n: int
    components: tuple

    @property
    def order(self):
        return self.components[0].order


@dataclass(frozen=True, eq=False)
class ObstructionPoly:
    """Obstruction determinant restricted to t = 0, as a polynomial in xi.

    Values are chart-dependent; only the vanishing locus is geometric.  The
    metadata records the conventions (frame, indices, orders) under which the
    coefficients were produced.
    """

    coeffs: dict
    degree: int
    base_point: tuple
    level: object
    indices: tuple
    t_order: int
    xi_order: int
    frame: str
    mode: str

    def coeff(self, mono):
        mono = tuple(mono)
        default = Fraction(0) if self.mode == "rational" else 0.0
        return self.coeffs.get(mono, default)

    def max_abs(self) -> float:
        if not self.coeffs:
            return 0.0
        return max(abs(c) for c in self.coeffs.values())

    def to_json(self) -> dict:
        def enc(v):
            return str(v) if self.mode == "rational" else float(v)

        monos = sorted(self.coeffs, key=lambda m: (sum(m), m))
        return {
            "base_point": [enc(c) for c in self.base_point],
            "level": enc(self.level),
            "indices": list(self.indices),
            "degree": self.degree,
            "coeffs": [{"mi": list(m), "c": enc(self.coeffs[m])} for m in monos],
            "orders": {"t": self.t_order, "xi": self.xi_order},
            "frame": self.frame,
            "mode": self.mode,
        }


def tensor_T(chart: ChartData) -> SeriesMatrix2:
    """The evolution tensor of the chart, at the metric truncation order."""
    exact = chart.exact
    order = chart.chi_sqrt_detg.order
    tvar = TruncatedSeries.variable(chart.x[0].vars, order, "t", exact=exact)
    prefactor = (tvar + chart.level) * chart.chi_sqrt_detg
    T = SeriesMatrix2(
        prefactor * chart.ginv12,
        prefactor * chart.ginv22,
        -(prefactor * chart.ginv11),
        -(prefactor * chart.ginv12),
    )
    if float(chart.level) > 0 and float(T.entry(0, 1).constant_term()) <= 0:
        raise DomainError("evolution tensor entry (0,1) lost positivity")
    return T


def tensor_Tn(T: SeriesMatrix2, n: int) -> SeriesMatrix2:
    """n-th tensor of the recursion; consumes one t-order per step."""
    if n < 1:
        raise DomainError("recursion index must be >= 1")
    if n - 1 > T.order:
        raise BudgetError(
            f"recursion to n={n} needs t-order >= {n - 1}, have series order {T.order}",
            required={"order": n - 1},
        )
    Tn = T
    for _ in range(n - 1):
        lower = Tn.order - 1
        Tn = Tn.derive("t") + Tn.truncate(lower) * T.truncate(lower)
    return Tn


def script_Tn(T: SeriesMatrix2, Tn: SeriesMatrix2, n: int = 0) -> ConstraintVector4:
    """Constraint 4-vector of T_n against T; costs one xi-order.

    Division is by the (0,1) entry of T, whose constant term is guaranteed
    nonzero away from the zero level set.  `n` is carried as metadata only.
    """
    pivot = T.entry(0, 1)
    if abs(float(pivot.constant_term())) < 1e-12:
        raise DomainError("pivot entry of T has (near-)zero constant term")
    order = min(Tn.order, T.order) - 1
    Tl = T.truncate(order + 1)
    Tnl = Tn.truncate(order + 1)

    def d1(e):
        return e.derive("xi1")

    def d2(e):
        return e.derive("xi2")

    def lower(e):
        return e.truncate(order)

    ratio = lower(Tnl.entry(0, 1)) * lower(Tl.entry(0, 1)).reciprocal()
    c1 = d1(Tnl.entry(1, 0)) - d2(Tnl.entry(0, 0)) - ratio * (
        d1(Tl.entry(1, 0)) - d2(Tl.entry(0, 0))
    )
    c2 = d1(Tnl.entry(1, 1)) - d2(Tnl.entry(0, 1)) - ratio * (
        d1(Tl.entry(1, 1)) - d2(Tl.entry(0, 1))
    )
    c3 = lower(Tnl.entry(1, 0)) - ratio * lower(Tl.entry(1, 0))
    c4 = lower(Tnl.entry(1, 1)) - lower(Tnl.entry(0, 0)) - ratio * (
        lower(Tl.entry(1, 1)) - lower(Tl.entry(0, 0))
    )
    return ConstraintVector4(n=n, components=(c1, c2, c3, c4))


def hierarchy_vectors(chart: ChartData, indices) -> dict:
    """Constraint vectors for every requested recursion index, sharing work."""
    indices = tuple(indices)
    max_n = max(indices)
    T = tensor_T(chart)
    out = {}
    Tn = T
    for n in range(2, max_n + 1):
        lower = Tn.order - 1
        if lower < 0:
            raise BudgetError(
                f"t-order budget exhausted at recursion step {n}",
                required={"t_order": max_n - 1},
            )
        Tn = Tn.derive("t") + Tn.truncate(lower) * T.truncate(lower)
        if n in indices:
            out[n] = script_Tn(T, Tn, n=n)
    if 1 in indices:
        out[1] = script_Tn(T, T, n=1)
    return out


def det4(columns) -> TruncatedSeries:
    """Determinant of four 4-component series columns (Laplace by 2x2 blocks)."""
    M = [[columns[c][r] for c in range(4)] for r in range(4)]
    result = None
    cols = (0, 1, 2, 3)
    for c1, c2 in itertools.combinations(cols, 2):
        c3, c4 = [c for c in cols if c not in (c1, c2)]
        sign = (-1) ** (c1 + c2 + 1)
        top = M[0][c1] * M[1][c2] - M[0][c2] * M[1][c1]
        bot = M[2][c3] * M[3][c4] - M[2][c4] * M[3][c3]
        term = top * bot
        if sign < 0:
            term = -term
        result = term if result is None else result + term
    return result


def minimum_orders(degree: int, max_index: int) -> dict:
    """Smallest order budget that leaves the requested polynomial exact."""
    return {
        "t_order": max_index - 1,
        "xi_order": degree + 1,
        "total": degree + max_index + 1,
    }


def _validate_budget(degree, indices, t_order, xi_order):
    need = minimum_orders(degree, max(indices))
    have_total = t_order + xi_order - 1  # metric series sit one below the flow order
    if (
        t_order < need["t_order"]
        or xi_order < need["xi_order"]
        or have_total < need["total"] - 1
    ):
        raise BudgetError(
            f"orders (t={t_order}, xi={xi_order}) insufficient for degree {degree} "
            f"with indices {tuple(indices)}; need at least t_order={need['t_order']}, "
            f"xi_order={need['xi_order']}",
            required=need,
        )


def obstruction_from_chart(chart: ChartData, degree: int,
                           indices=DEFAULT_INDICES) -> ObstructionPoly:
    indices = tuple(indices)
    if list(indices) != sorted(set(indices)) or len(indices) != 4 or indices[0] < 2:
        raise DomainError(
            f"indices must be four strictly increasing integers >= 2, got {indices}"
        )
    _validate_budget(degree, indices, chart.t_order, chart.xi_order)
    vectors = hierarchy_vectors(chart, indices)
    sliced = [
        tuple(c.slice_at_zero("t") for c in vectors[n].components) for n in indices
    ]
    common = min(s[0].order for s in sliced)
    sliced = [tuple(c.truncate(common) for c in col) for col in sliced]
    det = det4(sliced)
    if det.order < degree:
        raise BudgetError(
            f"determinant order {det.order} below requested degree {degree}",
            required=minimum_orders(degree, max(indices)),
        )
    coeffs = {}
    for mono, value in det.nonzero_terms():
        if sum(mono) <= degree:
            coeffs[mono] = value
    return ObstructionPoly(
        coeffs=coeffs,
        degree=degree,
        base_point=chart.bp.point,
        level=chart.level,
        indices=indices,
        t_order=chart.t_order,
        xi_order=chart.xi_order,
        frame=chart.bp.frame,
        mode=chart.bp.mode,
    )


def obstruction_P(f, bindings, p, degree: int = 4, t_order: int = 6,
                  xi_order: int = 6, frame: str = "auto",
                  mode: str = "double") -> ObstructionPoly:
    """Obstruction polynomial det of the constraint vectors 2..5 at t = 0."""
    chart = build_chart(f, bindings, p, t_order=t_order, xi_order=xi_order,
                        frame=frame, mode=mode)
    return obstruction_from_chart(chart, degree, DEFAULT_INDICES)


def obstruction_Pijkl(f, bindings, p, indices, degree: int = 4,
                      t_order: int = 6, xi_order: int = 6, frame: str = "auto",
                      mode: str = "double") -> ObstructionPoly:
    """Hierarchy member: determinant of the constraint vectors (i, j, k, l)."""
    indices = tuple(int(i) for i in indices)
    if len(indices) != 4 or any(b <= a for a, b in zip(indices, indices[1:])) or indices[0] < 2:
        raise DomainError(
            f"indices must satisfy l > k > j > i >= 2, got {indices}"
        )
    chart = build_chart(f, bindings, p, t_order=t_order, xi_order=xi_order,
                        frame=frame, mode=mode)
    return obstruction_from_chart(chart, degree, indices)


# -- closed-form checks on potentials ----------------------------------------

def dT_beta(chart: ChartData, Tn: SeriesMatrix2, psi: TruncatedSeries,
            T: SeriesMatrix2 | None = None, eliminate: bool = False) -> TruncatedSeries:
    """Coefficient of d(T_n beta) w.r.t. dxi1 ^ dxi2, for beta = d psi.

    With ``eliminate=True`` the d2 beta_2 occurrence is replaced by its value
    isolated from d(T beta) = 0, which turns the result into the dot product
    of the constraint vector with (beta1, beta2, d1 beta1, d2 beta1); this
    requires passing ``T``.
    """
    beta1 = psi.derive("xi1")
    beta2 = psi.derive("xi2")
    order = min(beta1.order, Tn.order) - 1
    b1 = beta1.truncate(order + 1)
    b2 = beta2.truncate(order + 1)
    A = Tn.truncate(order + 1)
    if not eliminate:
        row2 = A.entry(1, 0) * b1 + A.entry(1, 1) * b2
        row1 = A.entry(0, 0) * b1 + A.entry(0, 1) * b2
        return row2.derive("xi1") - row1.derive("xi2")
    if T is None:
        raise DomainError("eliminate=True requires the base tensor T")
    B = T.truncate(order + 1)

    def low(s):
        return s.truncate(order)

    d1b1 = b1.derive("xi1")
    d2b1 = b1.derive("xi2")
    # d2 beta2 isolated from the n = 1 constraint
    pivot = low(B.entry(0, 1)).reciprocal()
    d2b2 = pivot * (
        (B.entry(1, 0).derive("xi1") - B.entry(0, 0).derive("xi2")) * low(b1)
        + (B.entry(1, 1).derive("xi1") - B.entry(0, 1).derive("xi2")) * low(b2)
        + low(B.entry(1, 0)) * d1b1
        + (low(B.entry(1, 1)) - low(B.entry(0, 0))) * d2b1
    )
    return (
        (A.entry(1, 0).derive("xi1") - A.entry(0, 0).derive("xi2")) * low(b1)
        + (A.entry(1, 1).derive("xi1") - A.entry(0, 1).derive("xi2")) * low(b2)
        + low(A.entry(1, 0)) * d1b1
        + (low(A.entry(1, 1)) - low(A.entry(0, 0))) * d2b1
        - low(A.entry(0, 1)) * d2b2
    )


def divergence_form_rhs(chart: ChartData, psi: TruncatedSeries) -> TruncatedSeries:
    """-(c0 + t) * d_i(chi sqrt(g) g^{ij} d_j psi): the surface Laplacian plus
    the log-chi advection term of d(T d psi), assembled in divergence form so
    it stays rational for rational charts."""
    order = min(psi.derive("xi1").order, chart.ginv11.order) - 1
    b1 = psi.derive("xi1").truncate(order + 1)
    b2 = psi.derive("xi2").truncate(order + 1)
    csg = chart.chi_sqrt_detg.truncate(order + 1)
    G1 = chart.ginv11.truncate(order + 1) * b1 + chart.ginv12.truncate(order + 1) * b2
    G2 = chart.ginv12.truncate(order + 1) * b1 + chart.ginv22.truncate(order + 1) * b2
    div = (csg * G1).derive("xi1") + (csg * G2).derive("xi2")
    tvar = TruncatedSeries.variable(div.vars, div.order, "t", exact=chart.exact)
    return -((tvar + chart.level) * div)
