"""Scalar and vector fields on R^3: parsing, evaluation, jet expansion.

The grammar is deliberately small::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := base ('^' uint)?
    base   := number | ident | '(' expr ')' | func '(' expr ')' | '-' base
    func   := sin | cos | exp | log | sqrt

Identifiers are the coordinates ``x1, x2, x3`` or named parameters bound at
call time.  Numbers accept decimal and rational ``p/q`` literals; a quotient
of two numeric literals is folded into an exact rational at parse time so
that ``1/2`` means the rational one half in exact mode.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DomainError, ParseError
from .series import TruncatedSeries, apply_univariate

VAR_NAMES = ("x1", "x2", "x3")
FUNCS = ("sin", "cos", "exp", "log", "sqrt")


@dataclass(frozen=True)
class Var:
    index: int  # 0, 1, 2


@dataclass(frozen=True)
class Num:
    value: object  # Fraction (exact literal) or float


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class Func:
    name: str
    arg: object


@dataclass(frozen=True)
class Add:
    lhs: object
    rhs: object


@dataclass(frozen=True)
class Sub:
    lhs: object
    rhs: object


@dataclass(frozen=True)
class Mul:
    lhs: object
    rhs: object


@dataclass(frozen=True)
class Div:
    lhs: object
    rhs: object


@dataclass(frozen=True)
class Pow:
    base: object
    exp: int


Expr = object  # informal union of the node classes above


@dataclass(frozen=True)
class VectorExpr:
    components: tuple  # exactly three Expr

    def __post_init__(self):
        if len(self.components) != 3:
            raise ValueError("VectorExpr needs exactly 3 components")


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            offset = pos + len(text[pos:]) - len(stripped)
            raise ParseError(f"unexpected character {stripped[0]!r}", offset)
        if m.lastgroup is not None:
            out.append((m.lastgroup, m.group(m.lastgroup), m.start(m.lastgroup)))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str):
        kind, val, off = self.peek()
        if kind != "op" or val != op:
            raise ParseError(f"expected {op!r}", off)
        self.advance()

    def parse(self):
        node = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", off)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                rhs = self.term()
                node = Add(node, rhs) if val == "+" else Sub(node, rhs)
            else:
                return node

    def term(self):
        node = self.factor()
        while True:
            kind, val, off = self.peek()
            if kind == "op" and val in "*/":
                self.advance()
                rhs = self.factor()
                if val == "*":
                    node = Mul(node, rhs)
                else:
                    node = self._fold_div(node, rhs, off)
            else:
                return node

    def _fold_div(self, lhs, rhs, off):
        # numeric/numeric quotients become exact rational literals
        if isinstance(lhs, Num) and isinstance(rhs, Num):
            if isinstance(lhs.value, Fraction) and isinstance(rhs.value, Fraction):
                if rhs.value == 0:
                    raise ParseError("division by zero in numeric literal", off)
                return Num(lhs.value / rhs.value)
        return Div(lhs, rhs)

    def factor(self):
        node = self.base()
        kind, val, off = self.peek()
        if kind == "op" and val == "^":
            self.advance()
            kind, val, off = self.peek()
            if kind != "num" or not val.isdigit():
                raise ParseError("exponent must be a non-negative integer", off)
            self.advance()
            return Pow(node, int(val))
        return node

    def base(self):
        kind, val, off = self.advance()
        if kind == "num":
            return Num(Fraction(val))
        if kind == "ident":
            if val in VAR_NAMES:
                return Var(VAR_NAMES.index(val))
            nk, nv, _ = self.peek()
            if nk == "op" and nv == "(":
                if val not in FUNCS:
                    raise ParseError(f"unknown function {val!r}", off)
                self.advance()
                arg = self.expr()
                self.expect_op(")")
                return Func(val, arg)
            return Param(val)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "op" and val == "-":
            arg = self.base()
            if isinstance(arg, Num):
                return Num(-arg.value)
            return Neg(arg)
        raise ParseError(f"unexpected token {val!r}", off)


def parse(text: str):
    """Parse an expression string into an AST."""
    return _Parser(text).parse()


def parse_vector(texts) -> VectorExpr:
    texts = list(texts)
    if len(texts) != 3:
        raise ValueError("a vector field needs exactly 3 component expressions")
    return VectorExpr(tuple(parse(t) for t in texts))


# -- printing ---------------------------------------------------------------

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 2, Pow: 3}


def _prec(node) -> int:
    return _PREC.get(type(node), 4)


def to_string(node) -> str:
    """Serialize an AST back to the grammar; parse(to_string(e)) == e."""
    if isinstance(node, Var):
        return VAR_NAMES[node.index]
    if isinstance(node, Param):
        return node.name
    if isinstance(node, Num):
        v = node.value
        if isinstance(v, Fraction):
            body = str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
        else:
            body = repr(float(v))
        return f"({body})" if (v < 0) else body
    if isinstance(node, Neg):
        inner = to_string(node.arg)
        if _prec(node.arg) < 2:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, Func):
        return f"{node.name}({to_string(node.arg)})"
    if isinstance(node, Pow):
        base = to_string(node.base)
        # a two-token literal like 3/4 must be parenthesized under ^
        fractional = isinstance(node.base, Num) and isinstance(
            node.base.value, Fraction
        ) and node.base.value.denominator != 1
        if _prec(node.base) < 4 or fractional:
            base = f"({base})"
        return f"{base}^{node.exp}"
    if isinstance(node, (Add, Sub, Mul, Div)):
        op = {Add: "+", Sub: "-", Mul: "*", Div: "/"}[type(node)]
        me = _prec(node)
        left = to_string(node.lhs)
        if _prec(node.lhs) < me:
            left = f"({left})"
        right = to_string(node.rhs)
        # -, / are left-associative; parenthesize equal precedence on the right
        if _prec(node.rhs) < me or (isinstance(node, (Sub, Div)) and _prec(node.rhs) == me):
            right = f"({right})"
        return f"{left}{op}{right}"
    raise TypeError(f"not an expression node: {node!r}")


def parameters(node) -> set:
    """Names of the free parameters in an expression tree."""
    if isinstance(node, Param):
        return {node.name}
    if isinstance(node, (Var, Num)):
        return set()
    if isinstance(node, (Neg, Func)):
        return parameters(node.arg)
    if isinstance(node, Pow):
        return parameters(node.base)
    return parameters(node.lhs) | parameters(node.rhs)


def substitute(node, bindings: dict):
    """Replace bound parameters by numeric literals (unbound ones survive)."""
    if isinstance(node, Param):
        if node.name in bindings:
            return Num(_as_number(bindings[node.name]))
        return node
    if isinstance(node, (Var, Num)):
        return node
    if isinstance(node, Neg):
        return Neg(substitute(node.arg, bindings))
    if isinstance(node, Func):
        return Func(node.name, substitute(node.arg, bindings))
    if isinstance(node, Pow):
        return Pow(substitute(node.base, bindings), node.exp)
    cls = type(node)
    return cls(substitute(node.lhs, bindings), substitute(node.rhs, bindings))


def _as_number(v):
    if isinstance(v, (Fraction, float)):
        return v
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, str):
        return Fraction(v)
    raise DomainError(f"cannot interpret {v!r} as a number")


def as_fraction(v) -> Fraction:
    n = _as_number(v)
    if isinstance(n, float):
        return Fraction(n)
    return n


# -- numeric evaluation -------------------------------------------------------

def evaluate(node, bindings: dict | None, point):
    """IEEE-double value of the expression at a point or an (N, 3) batch."""
    bindings = bindings or {}
    pts = np.asarray(point, dtype=np.float64)
    single = pts.ndim == 1

    def ev(n):
        if isinstance(n, Var):
            return pts[n.index] if single else pts[:, n.index]
        if isinstance(n, Num):
            return float(n.value)
        if isinstance(n, Param):
            if n.name not in bindings:
                raise DomainError(f"unbound parameter {n.name!r}")
            return float(_as_number(bindings[n.name]))
        if isinstance(n, Neg):
            return -ev(n.arg)
        if isinstance(n, Add):
            return ev(n.lhs) + ev(n.rhs)
        if isinstance(n, Sub):
            return ev(n.lhs) - ev(n.rhs)
        if isinstance(n, Mul):
            return ev(n.lhs) * ev(n.rhs)
        if isinstance(n, Div):
            den = ev(n.rhs)
            if np.any(den == 0):
                raise DomainError("division by zero")
            return ev(n.lhs) / den
        if isinstance(n, Pow):
            return ev(n.base) ** n.exp
        if isinstance(n, Func):
            a = ev(n.arg)
            if n.name == "sin":
                return np.sin(a)
            if n.name == "cos":
                return np.cos(a)
            if n.name == "exp":
                return np.exp(a)
            if n.name == "log":
                if np.any(a <= 0):
                    raise DomainError("log of a non-positive value")
                return np.log(a)
            if n.name == "sqrt":
                if np.any(a < 0):
                    raise DomainError("sqrt of a negative value")
                return np.sqrt(a)
        raise TypeError(f"not an expression node: {n!r}")

    out = ev(node)
    if single:
        return float(out)
    return np.asarray(out, dtype=np.float64)


def evaluate_exact(node, bindings: dict | None, point) -> Fraction:
    """Exact rational evaluation; restricted to the polynomial fragment."""
    bindings = bindings or {}
    pt = [as_fraction(c) for c in point]

    def ev(n):
        if isinstance(n, Var):
            return pt[n.index]
        if isinstance(n, Num):
            return as_fraction(n.value)
        if isinstance(n, Param):
            if n.name not in bindings:
                raise DomainError(f"unbound parameter {n.name!r}")
            return as_fraction(bindings[n.name])
        if isinstance(n, Neg):
            return -ev(n.arg)
        if isinstance(n, Add):
            return ev(n.lhs) + ev(n.rhs)
        if isinstance(n, Sub):
            return ev(n.lhs) - ev(n.rhs)
        if isinstance(n, Mul):
            return ev(n.lhs) * ev(n.rhs)
        if isinstance(n, Div):
            den = ev(n.rhs)
            if den == 0:
                raise DomainError("division by zero")
            return ev(n.lhs) / den
        if isinstance(n, Pow):
            return ev(n.base) ** n.exp
        raise DomainError("exact evaluation requires a polynomial expression")

    return ev(node)


# -- jets ---------------------------------------------------------------------

def _sin_taylor(c: float, order: int):
    cyc = (math.sin(c), math.cos(c), -math.sin(c), -math.cos(c))
    return [cyc[k % 4] / math.factorial(k) for k in range(order + 1)]


def _cos_taylor(c: float, order: int):
    cyc = (math.cos(c), -math.sin(c), -math.cos(c), math.sin(c))
    return [cyc[k % 4] / math.factorial(k) for k in range(order + 1)]


def _exp_taylor(c: float, order: int):
    e = math.exp(c)
    return [e / math.factorial(k) for k in range(order + 1)]


def _log_taylor(c: float, order: int):
    if c <= 0:
        raise DomainError("log of a non-positive value in a jet")
    out = [math.log(c)]
    for k in range(1, order + 1):
        out.append((-1.0) ** (k + 1) / (k * c**k))
    return out


def _sqrt_taylor(c: float, order: int):
    if c <= 0:
        raise DomainError("sqrt jet needs a strictly positive argument")
    out = [math.sqrt(c)]
    for k in range(order):
        out.append(out[-1] * (0.5 - k) / ((k + 1) * c))
    return out


def jet(node, bindings: dict | None, point, order: int, mode: str = "double",
        max_order: int = 12) -> TruncatedSeries:
    """Taylor expansion of the expression at `point` through total degree `order`.

    The result is a series in (x1, x2, x3) whose coefficients are the Taylor
    coefficients with respect to the displacement from `point`; the point is
    recorded on the series as ``base_point``.  Exact mode requires a polynomial
    expression, rational bindings, and a rational point.
    """
    if order < 0:
        raise DomainError("jet order must be >= 0")
    if order > max_order:
        raise BudgetExceeded(order, max_order)
    bindings = bindings or {}
    exact = mode == "rational"
    if mode not in ("double", "rational"):
        raise DomainError(f"unknown mode {mode!r}")
    if exact:
        pt = tuple(as_fraction(c) for c in point)
    else:
        pt = tuple(float(c) for c in point)
    vars = VAR_NAMES

    def mk_const(v):
        return TruncatedSeries.constant(vars, order, v, exact=exact)

    def ev(n) -> TruncatedSeries:
        if isinstance(n, Var):
            if order == 0:
                return mk_const(pt[n.index])
            s = TruncatedSeries.variable(vars, order, VAR_NAMES[n.index], exact=exact)
            return s + pt[n.index]
        if isinstance(n, Num):
            return mk_const(n.value if exact else float(n.value))
        if isinstance(n, Param):
            if n.name not in bindings:
                raise DomainError(f"unbound parameter {n.name!r}")
            v = _as_number(bindings[n.name])
            return mk_const(v if exact else float(v))
        if isinstance(n, Neg):
            return -ev(n.arg)
        if isinstance(n, Add):
            return ev(n.lhs) + ev(n.rhs)
        if isinstance(n, Sub):
            return ev(n.lhs) - ev(n.rhs)
        if isinstance(n, Mul):
            return ev(n.lhs) * ev(n.rhs)
        if isinstance(n, Div):
            den = ev(n.rhs)
            if exact:
                nonconst = any(c != 0 for c in den.coeffs[1:])
                if nonconst:
                    raise DomainError(
                        "rational mode supports division by constants only"
                    )
                if den.coeffs[0] == 0:
                    raise DomainError("division by zero")
                return ev(n.lhs) * (Fraction(1) / den.coeffs[0])
            return ev(n.lhs) * den.reciprocal()
        if isinstance(n, Pow):
            base = ev(n.base)
            out = mk_const(1)
            p = n.exp
            sq = base
            while p:
                if p & 1:
                    out = out * sq
                p >>= 1
                if p:
                    sq = sq * sq
            return out
        if isinstance(n, Func):
            if exact:
                raise DomainError(
                    "rational mode requires a polynomial expression "
                    f"(found {n.name})"
                )
            arg = ev(n.arg)
            c = float(arg.constant_term())
            table = {
                "sin": _sin_taylor,
                "cos": _cos_taylor,
                "exp": _exp_taylor,
                "log": _log_taylor,
                "sqrt": _sqrt_taylor,
            }[n.name]
            return apply_univariate(arg, table(c, order))
        raise TypeError(f"not an expression node: {n!r}")

    out = ev(node)
    out.base_point = pt
    return out


class BudgetExceeded(DomainError):
    def __init__(self, order, max_order):
        super().__init__(f"jet order {order} exceeds the configured maximum {max_order}")


def poly_degree(node):
    """Total degree of a polynomial expression, or None if not polynomial."""
    if isinstance(node, Var):
        return 1
    if isinstance(node, (Num, Param)):
        return 0
    if isinstance(node, Neg):
        return poly_degree(node.arg)
    if isinstance(node, (Add, Sub)):
        a, b = poly_degree(node.lhs), poly_degree(node.rhs)
        return None if a is None or b is None else max(a, b)
    if isinstance(node, Mul):
        a, b = poly_degree(node.lhs), poly_degree(node.rhs)
        return None if a is None or b is None else a + b
    if isinstance(node, Div):
        a, b = poly_degree(node.lhs), poly_degree(node.rhs)
        if a is None or b != 0:
            return None
        return a
    if isinstance(node, Pow):
        a = poly_degree(node.base)
        return None if a is None else a * node.exp
    return None
