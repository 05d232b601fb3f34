"""Dense truncated multivariate power series (jets).

Every chart and obstruction quantity in this package is carried by a
:class:`TruncatedSeries`: a polynomial in a fixed ordered tuple of named
variables, truncated at a total degree ``order``.  Coefficients are IEEE
doubles by default; exact mode stores ``fractions.Fraction`` coefficients in
an object array and keeps every ring operation exact.

Truncation orders are strict: binary operations require identical variable
tuples *and* identical orders, and lowering must be done explicitly with
:meth:`TruncatedSeries.truncate`.  Derivatives drop the order by one and the
result is tracked at the lower order.  This makes silent precision loss a
hard error instead of a latent bug.

Monomials are stored in graded order (total degree, then lexicographic on
the exponent tuple), so the monomial list of order ``K - 1`` is a prefix of
the list of order ``K``.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import DomainError, SeriesMismatchError


@lru_cache(maxsize=None)
def _space(names: tuple, order: int) -> "_Space":
    return _Space(names, order)


class _Space:
    """Monomial bookkeeping shared by all series over (variables, order)."""

    def __init__(self, names: tuple, order: int):
        if order < 0:
            raise SeriesMismatchError("truncation order must be >= 0")
        self.names = names
        self.order = order
        self.nvars = len(names)
        monos = sorted(
            (
                m
                for m in itertools.product(range(order + 1), repeat=self.nvars)
                if sum(m) <= order
            ),
            key=lambda m: (sum(m), m),
        )
        self.monos = monos
        self.index = {m: i for i, m in enumerate(monos)}
        self.size = len(monos)
        self.degrees = np.array([sum(m) for m in monos], dtype=np.int64)
        self.expo = np.array(monos, dtype=np.int64).reshape(self.size, self.nvars)
        self._pairs = None
        self._diff = {}

    def var_pos(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SeriesMismatchError(f"unknown variable {name!r} in {self.names}") from None

    def pairs(self):
        """(I, J, K) index arrays with mono[I] + mono[J] = mono[K], all degrees <= order."""
        if self._pairs is None:
            starts = np.searchsorted(self.degrees, np.arange(self.order + 2))
            I, J, K = [], [], []
            for i, mi in enumerate(self.monos):
                cutoff = starts[self.order - sum(mi) + 1]
                for j in range(cutoff):
                    mj = self.monos[j]
                    I.append(i)
                    J.append(j)
                    K.append(self.index[tuple(a + b for a, b in zip(mi, mj))])
            self._pairs = (
                np.array(I, dtype=np.int64),
                np.array(J, dtype=np.int64),
                np.array(K, dtype=np.int64),
            )
        return self._pairs

    def diff_map(self, pos: int):
        """(src, dst, factor) arrays implementing d/d(var pos) into order-1 space."""
        if pos not in self._diff:
            src, dst, fac = [], [], []
            lower = _space(self.names, self.order - 1) if self.order > 0 else None
            for i, m in enumerate(self.monos):
                if m[pos] == 0:
                    continue
                shifted = tuple(e - 1 if q == pos else e for q, e in enumerate(m))
                src.append(i)
                dst.append(lower.index[shifted])
                fac.append(m[pos])
            self._diff[pos] = (
                np.array(src, dtype=np.int64),
                np.array(dst, dtype=np.int64),
                np.array(fac, dtype=np.int64),
            )
        return self._diff[pos]


def _is_exact_scalar(v) -> bool:
    return isinstance(v, (Fraction, int)) and not isinstance(v, bool)


def _coerce(value, exact: bool):
    if exact:
        if isinstance(value, Fraction):
            return value
        if isinstance(value, int):
            return Fraction(value)
        raise DomainError(f"exact mode requires rational coefficients, got {value!r}")
    return float(value)


class TruncatedSeries:
    """A polynomial in named variables truncated at a fixed total degree."""

    __slots__ = ("vars", "order", "coeffs", "base_point")

    def __init__(self, vars: tuple, order: int, coeffs: np.ndarray, base_point=None):
        self.vars = tuple(vars)
        self.order = order
        self.coeffs = coeffs
        self.base_point = base_point

    # -- constructors ------------------------------------------------------

    @classmethod
    def zeros(cls, vars, order, exact=False):
        sp = _space(tuple(vars), order)
        if exact:
            c = np.empty(sp.size, dtype=object)
            c[:] = [Fraction(0)] * sp.size
        else:
            c = np.zeros(sp.size, dtype=np.float64)
        return cls(tuple(vars), order, c)

    @classmethod
    def constant(cls, vars, order, value, exact=False):
        s = cls.zeros(vars, order, exact=exact)
        s.coeffs[0] = _coerce(value, exact)
        return s

    @classmethod
    def variable(cls, vars, order, name, exact=False):
        """The series of the coordinate function `name` (no constant part)."""
        sp = _space(tuple(vars), order)
        s = cls.zeros(vars, order, exact=exact)
        mono = tuple(1 if v == name else 0 for v in vars)
        if sum(mono) != 1:
            raise SeriesMismatchError(f"{name!r} is not one of {vars}")
        if order < 1:
            raise SeriesMismatchError("order 0 series cannot represent a variable")
        s.coeffs[sp.index[mono]] = _coerce(1, exact)
        return s

    @classmethod
    def from_terms(cls, vars, order, terms: dict, exact=False):
        sp = _space(tuple(vars), order)
        s = cls.zeros(vars, order, exact=exact)
        for mono, value in terms.items():
            mono = tuple(mono)
            if mono not in sp.index:
                raise SeriesMismatchError(f"monomial {mono} exceeds order {order}")
            s.coeffs[sp.index[mono]] = _coerce(value, exact)
        return s

    # -- basic queries -----------------------------------------------------

    @property
    def exact(self) -> bool:
        return self.coeffs.dtype == object

    @property
    def space(self) -> _Space:
        return _space(self.vars, self.order)

    def coeff(self, mono):
        sp = self.space
        mono = tuple(mono)
        if mono not in sp.index:
            return Fraction(0) if self.exact else 0.0
        return self.coeffs[sp.index[mono]]

    def nonzero_terms(self):
        sp = self.space
        return [(sp.monos[i], c) for i, c in enumerate(self.coeffs) if c != 0]

    def max_abs(self) -> float:
        if self.coeffs.size == 0:
            return 0.0
        return max(abs(c) for c in self.coeffs) if self.exact else float(np.max(np.abs(self.coeffs)))

    def constant_term(self):
        return self.coeffs[0]

    def copy(self):
        return TruncatedSeries(self.vars, self.order, self.coeffs.copy(), self.base_point)

    def equals(self, other) -> bool:
        return (
            self.vars == other.vars
            and self.order == other.order
            and all(a == b for a, b in zip(self.coeffs, other.coeffs))
        )

    def __repr__(self):
        terms = self.nonzero_terms()
        if not terms:
            return f"<series 0 vars={self.vars} order={self.order}>"
        body = " + ".join(f"{c}*{m}" for m, c in terms[:6])
        more = "" if len(terms) <= 6 else f" ... ({len(terms)} terms)"
        return f"<series {body}{more} vars={self.vars} order={self.order}>"

    # -- ring operations ---------------------------------------------------

    def _check(self, other):
        if self.vars != other.vars:
            raise SeriesMismatchError(f"variable mismatch: {self.vars} vs {other.vars}")
        if self.order != other.order:
            raise SeriesMismatchError(
                f"order mismatch: {self.order} vs {other.order}; truncate explicitly"
            )
        if self.exact != other.exact:
            raise SeriesMismatchError("cannot mix exact and double coefficient modes")

    def __add__(self, other):
        if not isinstance(other, TruncatedSeries):
            out = self.copy()
            out.coeffs[0] = out.coeffs[0] + _coerce(other, self.exact)
            return out
        self._check(other)
        return TruncatedSeries(self.vars, self.order, self.coeffs + other.coeffs)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        if not isinstance(other, TruncatedSeries):
            return self.__add__(-_coerce(other, self.exact))
        self._check(other)
        return TruncatedSeries(self.vars, self.order, self.coeffs - other.coeffs)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __neg__(self):
        return TruncatedSeries(self.vars, self.order, -self.coeffs)

    def __mul__(self, other):
        if not isinstance(other, TruncatedSeries):
            scalar = _coerce(other, self.exact)
            if self.exact:
                out = self.coeffs.copy()
                for i in range(out.size):
                    out[i] = out[i] * scalar
                return TruncatedSeries(self.vars, self.order, out)
            return TruncatedSeries(self.vars, self.order, self.coeffs * scalar)
        self._check(other)
        sp = self.space
        if self.exact:
            out = TruncatedSeries.zeros(self.vars, self.order, exact=True)
            starts = np.searchsorted(sp.degrees, np.arange(sp.order + 2))
            oc = out.coeffs
            for i, ci in enumerate(self.coeffs):
                if ci == 0:
                    continue
                cutoff = starts[sp.order - sp.degrees[i] + 1]
                row = other.coeffs
                for j in range(cutoff):
                    cj = row[j]
                    if cj == 0:
                        continue
                    k = sp.index[tuple(a + b for a, b in zip(sp.monos[i], sp.monos[j]))]
                    oc[k] = oc[k] + ci * cj
            return out
        I, J, K = sp.pairs()
        out = np.zeros(sp.size, dtype=np.float64)
        np.add.at(out, K, self.coeffs[I] * other.coeffs[J])
        return TruncatedSeries(self.vars, self.order, out)

    def __rmul__(self, other):
        return self.__mul__(other)

    # -- calculus ----------------------------------------------------------

    def truncate(self, order: int):
        """Explicitly lower the truncation order (graded prefix copy)."""
        if order == self.order:
            return self
        if order > self.order:
            raise SeriesMismatchError("cannot raise truncation order")
        sp = _space(self.vars, order)
        return TruncatedSeries(self.vars, order, self.coeffs[: sp.size].copy())

    def derive(self, name: str):
        """Formal partial derivative; result order is one lower."""
        if self.order < 1:
            raise SeriesMismatchError("cannot derive an order-0 series")
        sp = self.space
        pos = sp.var_pos(name)
        src, dst, fac = sp.diff_map(pos)
        out = TruncatedSeries.zeros(self.vars, self.order - 1, exact=self.exact)
        if self.exact:
            for s, d, f in zip(src, dst, fac):
                out.coeffs[d] = self.coeffs[s] * int(f)
        else:
            out.coeffs[dst] = self.coeffs[src] * fac
        return out

    def integrate(self, name: str):
        """Antiderivative in `name` vanishing at 0; kept at the same order.

        Contributions that would land above the truncation order are dropped,
        so the result is exact through `order` whenever the input is exact
        through `order - 1`.
        """
        sp = self.space
        pos = sp.var_pos(name)
        out = TruncatedSeries.zeros(self.vars, self.order, exact=self.exact)
        for i, m in enumerate(sp.monos):
            c = self.coeffs[i]
            if c == 0:
                continue
            if sp.degrees[i] + 1 > self.order:
                continue
            up = tuple(e + 1 if q == pos else e for q, e in enumerate(m))
            k = m[pos] + 1
            out.coeffs[sp.index[up]] = c / k if self.exact else c / float(k)
        return out

    def reciprocal(self):
        """Series inverse by Newton iteration; constant term must be nonzero."""
        c = self.constant_term()
        if c == 0 or (not self.exact and abs(c) < 1e-300):
            raise DomainError("reciprocal of a series with zero constant term")
        inv0 = Fraction(1) / c if self.exact else 1.0 / c
        r = TruncatedSeries.constant(self.vars, self.order, inv0, exact=self.exact)
        two = TruncatedSeries.constant(self.vars, self.order, 2, exact=self.exact)
        correct = 1
        while correct <= self.order:
            r = r * (two - self * r)
            correct *= 2
        return r

    def sqrt(self):
        """Series square root; constant term must be a positive (exact: perfect
        square) number.  Uses the inverse-square-root Newton iteration."""
        c = self.constant_term()
        if self.exact:
            root = _fraction_sqrt(c)
            if root is None:
                raise DomainError(
                    f"exact sqrt needs a perfect-square constant term, got {c}"
                )
            inv0 = Fraction(1) / root
        else:
            if c <= 0:
                raise DomainError("sqrt of a series with non-positive constant term")
            inv0 = 1.0 / math.sqrt(c)
        y = TruncatedSeries.constant(self.vars, self.order, inv0, exact=self.exact)
        three = TruncatedSeries.constant(self.vars, self.order, 3, exact=self.exact)
        half = Fraction(1, 2) if self.exact else 0.5
        correct = 1
        while correct <= self.order:
            y = (y * (three - self * (y * y))) * half
            correct *= 2
        return self * y

    # -- restructuring -----------------------------------------------------

    def slice_at_zero(self, name: str):
        """Set variable `name` to 0 and drop it from the variable tuple."""
        sp = self.space
        pos = sp.var_pos(name)
        new_vars = tuple(v for v in self.vars if v != name)
        out = TruncatedSeries.zeros(new_vars, self.order, exact=self.exact)
        tgt = _space(new_vars, self.order)
        for i, m in enumerate(sp.monos):
            if m[pos] != 0:
                continue
            rest = tuple(e for q, e in enumerate(m) if q != pos)
            out.coeffs[tgt.index[rest]] = self.coeffs[i]
        return out

    def embed(self, vars: tuple):
        """Reinterpret over a superset variable tuple (same order)."""
        vars = tuple(vars)
        positions = [vars.index(v) for v in self.vars]
        out = TruncatedSeries.zeros(vars, self.order, exact=self.exact)
        tgt = _space(vars, self.order)
        for i, m in enumerate(self.space.monos):
            big = [0] * len(vars)
            for q, e in zip(positions, m):
                big[q] = e
            out.coeffs[tgt.index[tuple(big)]] = self.coeffs[i]
        return out

    # -- evaluation / serialization -----------------------------------------

    def eval(self, points):
        """Evaluate the truncated polynomial at one point or an (N, nvars) batch."""
        pts = np.asarray(points, dtype=np.float64)
        single = pts.ndim == 1
        if single:
            pts = pts[None, :]
        if pts.shape[1] != len(self.vars):
            raise SeriesMismatchError(
                f"points have {pts.shape[1]} coordinates, series has {len(self.vars)}"
            )
        coeffs = self.coeffs.astype(np.float64) if self.exact else self.coeffs
        vals = _design_matrix(self.space, pts) @ coeffs
        return float(vals[0]) if single else vals

    def to_json(self) -> dict:
        def enc(c):
            return str(c) if self.exact else float(c)

        sp = self.space
        return {
            "vars": list(self.vars),
            "order": self.order,
            "coeffs": [
                {"mi": list(sp.monos[i]), "c": enc(c)}
                for i, c in enumerate(self.coeffs)
                if c != 0
            ],
        }

    @classmethod
    def from_json(cls, data: dict, exact=False):
        terms = {}
        for entry in data["coeffs"]:
            value = Fraction(entry["c"]) if exact else float(entry["c"])
            terms[tuple(entry["mi"])] = value
        return cls.from_terms(tuple(data["vars"]), data["order"], terms, exact=exact)


def _design_matrix(space: _Space, pts: np.ndarray) -> np.ndarray:
    """Monomial values at each point; powers built by cumulative products."""
    design = np.ones((pts.shape[0], space.size), dtype=np.float64)
    for v in range(space.nvars):
        maxe = int(space.expo[:, v].max()) if space.size else 0
        pw = np.ones((pts.shape[0], maxe + 1), dtype=np.float64)
        for k in range(1, maxe + 1):
            pw[:, k] = pw[:, k - 1] * pts[:, v]
        design *= pw[:, space.expo[:, v]]
    return design


def eval_batch(series_seq, points) -> np.ndarray:
    """Evaluate several series over one shared variable space at a point batch.

    Returns an array of shape (len(series_seq), N); the design matrix of
    monomial values is built once.
    """
    series_seq = list(series_seq)
    first = series_seq[0]
    for s in series_seq[1:]:
        first._check(s)
    pts = np.asarray(points, dtype=np.float64)
    design = _design_matrix(first.space, pts)
    stacked = np.stack(
        [s.coeffs.astype(np.float64) if s.exact else s.coeffs for s in series_seq]
    )
    return stacked @ design.T


def _fraction_sqrt(value: Fraction):
    """Exact square root of a non-negative rational, or None."""
    if value < 0:
        return None
    num, den = value.numerator, value.denominator
    rn, rd = math.isqrt(num), math.isqrt(den)
    if rn * rn != num or rd * rd != den:
        return None
    return Fraction(rn, rd)


def apply_univariate(s: TruncatedSeries, taylor: list):
    """Compose a univariate function with a series.

    ``taylor[k]`` must be the k-th Taylor coefficient g^(k)(c)/k! of the outer
    function at c = constant term of ``s``.  Evaluated by Horner on the
    nilpotent part, so the cost is ``order`` series multiplications.
    """
    u = s.copy()
    u.coeffs[0] = Fraction(0) if s.exact else 0.0
    out = TruncatedSeries.constant(s.vars, s.order, taylor[-1], exact=s.exact)
    for k in range(len(taylor) - 2, -1, -1):
        out = out * u + taylor[k]
    return out


def compose3(f_jet: TruncatedSeries, inner, out_order=None, tol=1e-12):
    """Substitute three inner series into a 3-variable jet.

    The inner series must share a variable tuple and order, and their constant
    terms must match the jet's base point (exactly in exact mode, within `tol`
    otherwise).  Result order is min(jet order, inner order) unless lowered by
    `out_order`.
    """
    a, b, c = inner
    a._check(b), a._check(c)
    if len(f_jet.vars) != 3:
        raise SeriesMismatchError("compose3 expects a 3-variable jet")
    base = f_jet.base_point if f_jet.base_point is not None else (0, 0, 0)
    order = min(f_jet.order, a.order)
    if out_order is not None:
        order = min(order, out_order)
    exact = f_jet.exact
    if exact != a.exact:
        raise SeriesMismatchError("jet and inner series disagree in coefficient mode")
    shifted = []
    for s, p in zip((a, b, c), base):
        d = s.truncate(order).copy()
        if exact:
            if d.coeffs[0] != p:
                raise DomainError("inner constant term does not match jet base point")
            d.coeffs[0] = Fraction(0)
        else:
            if abs(float(d.coeffs[0]) - float(p)) > tol:
                raise DomainError(
                    f"inner constant term {d.coeffs[0]} != base point {p} (tol {tol})"
                )
            d.coeffs[0] = 0.0
        shifted.append(d)
    out = TruncatedSeries.zeros(a.vars, order, exact=exact)
    pows = {}

    def power(axis, k):
        if k == 0:
            return None
        key = (axis, k)
        if key not in pows:
            pows[key] = shifted[axis] if k == 1 else power(axis, k - 1) * shifted[axis]
        return pows[key]

    sp = f_jet.space
    for i, coeff in enumerate(f_jet.coeffs):
        if coeff == 0:
            continue
        e1, e2, e3 = sp.monos[i]
        if e1 + e2 + e3 > order:
            continue
        term = None
        for axis, e in enumerate((e1, e2, e3)):
            p = power(axis, e)
            if p is None:
                continue
            term = p if term is None else term * p
        if term is None:
            out = out + coeff
        else:
            out = out + term * coeff
    return out


class SeriesMatrix2:
    """A 2x2 matrix of series sharing variables and order.

    Index convention: ``entry(i, j)`` is row i, column j (0-based).  In the
    tensor notation used by the obstruction module the row is the lower index
    and the column is the upper index, so entry ``(0, 1)`` is the component
    with upper index 2 and lower index 1.
    """

    __slots__ = ("m",)

    def __init__(self, m00, m01, m10, m11):
        m00._check(m01), m00._check(m10), m00._check(m11)
        self.m = ((m00, m01), (m10, m11))

    @classmethod
    def identity(cls, vars, order, exact=False):
        one = TruncatedSeries.constant(vars, order, 1, exact=exact)
        zero = TruncatedSeries.zeros(vars, order, exact=exact)
        return cls(one, zero.copy(), zero.copy(), one.copy())

    @classmethod
    def rotation_j(cls, vars, order, exact=False):
        """The constant matrix [[0, 1], [-1, 0]]."""
        one = TruncatedSeries.constant(vars, order, 1, exact=exact)
        zero = TruncatedSeries.zeros(vars, order, exact=exact)
        return cls(zero, one, -one, zero.copy())

    def entry(self, i, j) -> TruncatedSeries:
        return self.m[i][j]

    @property
    def order(self):
        return self.m[0][0].order

    @property
    def vars(self):
        return self.m[0][0].vars

    def __add__(self, other):
        return SeriesMatrix2(
            self.m[0][0] + other.m[0][0],
            self.m[0][1] + other.m[0][1],
            self.m[1][0] + other.m[1][0],
            self.m[1][1] + other.m[1][1],
        )

    def __sub__(self, other):
        return SeriesMatrix2(
            self.m[0][0] - other.m[0][0],
            self.m[0][1] - other.m[0][1],
            self.m[1][0] - other.m[1][0],
            self.m[1][1] - other.m[1][1],
        )

    def __mul__(self, other):
        """Matrix product (both operands SeriesMatrix2) or scalar/series scaling."""
        if isinstance(other, SeriesMatrix2):
            a, b = self.m, other.m
            return SeriesMatrix2(
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            )
        return SeriesMatrix2(
            self.m[0][0] * other,
            self.m[0][1] * other,
            self.m[1][0] * other,
            self.m[1][1] * other,
        )

    def derive(self, name: str):
        return SeriesMatrix2(
            self.m[0][0].derive(name),
            self.m[0][1].derive(name),
            self.m[1][0].derive(name),
            self.m[1][1].derive(name),
        )

    def truncate(self, order: int):
        return SeriesMatrix2(
            self.m[0][0].truncate(order),
            self.m[0][1].truncate(order),
            self.m[1][0].truncate(order),
            self.m[1][1].truncate(order),
        )

    def max_abs(self) -> float:
        return max(e.max_abs() for row in self.m for e in row)


def mat_mul(a: SeriesMatrix2, b: SeriesMatrix2) -> SeriesMatrix2:
    return a * b


def mat_derive(a: SeriesMatrix2, name: str) -> SeriesMatrix2:
    return a.derive(name)
