"""Basis-function declarations: parsing, rendering, evaluation, reflection signs.

A basis vector is written as a comma-separated list of product terms::

    1, x1, x2, x1*x2, x1^2, (x1-0.5)_+^3

Grammar (whitespace is ignored between tokens)::

    vector := term ("," term)*
    term   := "1" | factor ("*" factor)*
    factor := VAR ["^" INT] | "(" VAR [("+" | "-") NUM] ")_+" "^" INT
    VAR    := "x" INT            (1-based variable index)

``(x1-0.5)_+^3`` means ``max(0, x1 - 0.5) ** 3``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, RangeError


@dataclass(frozen=True)
class Const:
    value: float = 1.0


@dataclass(frozen=True)
class Pow:
    var: int
    exponent: int = 1


@dataclass(frozen=True)
class TruncPow:
    """``max(0, x_var + shift) ** exponent``."""

    var: int
    shift: float
    exponent: int


@dataclass(frozen=True)
class Term:
    factors: tuple


@dataclass(frozen=True)
class BasisVector:
    exprs: tuple

    def __len__(self):
        return len(self.exprs)

    def __iter__(self):
        return iter(self.exprs)

    @property
    def max_var(self):
        return max((v for e in self.exprs for v in _vars(e)), default=0)

    def __str__(self):
        return render_basis(self)


def _vars(expr):
    if isinstance(expr, Const):
        return ()
    return tuple(f.var for f in expr.factors)


# --------------------------------------------------------------------------
# tokenizer / parser

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<var>x\d+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<trunc>_\+)
  | (?P<sym>[,*^()+-])
    """,
    re.VERBOSE,
)


def _tokenize(text):
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        if kind != "ws":
            val = m.group()
            toks.append((val if kind == "sym" else kind, val, pos))
        pos = m.end()
    toks.append(("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def fail(self, expected):
        kind, val, pos = self.tok
        got = "end of input" if kind == "end" else repr(val)
        raise ParseError(f"expected {expected}, got {got}", self.text, pos)

    def take(self, kind, expected=None):
        if self.tok[0] != kind:
            self.fail(expected or repr(kind))
        tok = self.tok
        self.i += 1
        return tok

    def positive_int(self, what):
        kind, val, pos = self.tok
        if kind != "num" or not val.isdigit() or int(val) < 1:
            self.fail(what)
        self.i += 1
        return int(val)

    def var(self):
        _, val, pos = self.take("var", "variable like 'x1'")
        idx = int(val[1:])
        if idx < 1:
            raise ParseError("variable indices start at 1", self.text, pos)
        return idx

    def vector(self):
        exprs = [self.term()]
        while self.tok[0] == ",":
            self.i += 1
            exprs.append(self.term())
        if self.tok[0] != "end":
            self.fail("',' or '*'")
        return BasisVector(tuple(exprs))

    def term(self):
        kind, val, _ = self.tok
        if kind == "num":
            if val != "1":
                self.fail("'1', a variable or '('")
            self.i += 1
            return Const(1.0)
        factors = [self.factor()]
        while self.tok[0] == "*":
            self.i += 1
            factors.append(self.factor())
        return Term(_merge(factors))

    def factor(self):
        kind = self.tok[0]
        if kind == "var":
            var = self.var()
            exp = 1
            if self.tok[0] == "^":
                self.i += 1
                exp = self.positive_int("positive integer exponent")
            return Pow(var, exp)
        if kind == "(":
            self.i += 1
            var = self.var()
            shift = 0.0
            if self.tok[0] in ("+", "-"):
                sign = 1.0 if self.tok[0] == "+" else -1.0
                self.i += 1
                _, num, _ = self.take("num", "number")
                shift = sign * float(num)
            self.take(")", "')'")
            self.take("trunc", "'_+'")
            self.take("^", "'^'")
            exp = self.positive_int("positive integer exponent")
            return TruncPow(var, shift, exp)
        self.fail("'1', a variable or '('")


def _merge(factors):
    """Merge repeated plain powers of one variable, keeping first-seen order."""
    out = []
    pos = {}
    for f in factors:
        if isinstance(f, Pow) and f.var in pos:
            k = pos[f.var]
            out[k] = Pow(f.var, out[k].exponent + f.exponent)
        else:
            if isinstance(f, Pow):
                pos[f.var] = len(out)
            out.append(f)
    return tuple(out)


def parse_basis(text, p=None):
    """Parse a basis declaration; if ``p`` is given, check variable indices."""
    vec = _Parser(text).vector()
    if p is not None and vec.max_var > p:
        raise RangeError(f"variable x{vec.max_var} exceeds p={p} in {text!r}")
    return vec


# --------------------------------------------------------------------------
# rendering


def _num(x):
    return repr(float(x))


def render_expr(expr):
    if isinstance(expr, Const):
        return "1"
    parts = []
    for f in expr.factors:
        if isinstance(f, Pow):
            parts.append(f"x{f.var}" if f.exponent == 1 else f"x{f.var}^{f.exponent}")
        else:
            inner = f"x{f.var}"
            if f.shift > 0:
                inner += "+" + _num(f.shift)
            elif f.shift < 0:
                inner += "-" + _num(-f.shift)
            parts.append(f"({inner})_+^{f.exponent}")
    return "*".join(parts)


def render_basis(vec):
    return ", ".join(render_expr(e) for e in vec.exprs)


# --------------------------------------------------------------------------
# evaluation


def eval_expr(expr, points):
    """Evaluate one expression at each row of ``points`` (shape (n, p))."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if isinstance(expr, Const):
        return np.full(points.shape[0], expr.value)
    out = np.ones(points.shape[0])
    for f in expr.factors:
        col = points[:, f.var - 1]
        if isinstance(f, TruncPow):
            col = np.maximum(col + f.shift, 0.0)
        out = out * col**f.exponent
    return out


def eval_basis(vec, points):
    """Evaluate a basis vector.

    A single point (1-D input) gives a length-q_j vector; an (n, p) array
    gives an (n, q_j) array.
    """
    arr = np.asarray(points, dtype=np.float64)
    cols = [eval_expr(e, arr) for e in vec.exprs]
    out = np.stack(cols, axis=-1)
    return out[0] if arr.ndim == 1 else out


# --------------------------------------------------------------------------
# reflection behaviour


def _touches_trunc(expr, axis):
    return not isinstance(expr, Const) and any(
        isinstance(f, TruncPow) and f.var == axis for f in expr.factors
    )


def _symbolic_sign(expr, axis):
    if isinstance(expr, Const):
        return 1
    exp = sum(f.exponent for f in expr.factors if isinstance(f, Pow) and f.var == axis)
    return -1 if exp % 2 else 1


def reflection_signature(vec, axis, space):
    """Signs ``s`` with ``e(T_axis x) == s * e(x)`` over the space, or None.

    Pure monomials follow the parity of their exponent on ``axis``.  Terms
    with a truncated power on ``axis`` are checked exhaustively over the
    grid points.  The space must be closed under the reflection.
    """
    signs = []
    mirror = None
    for expr in vec.exprs:
        if not _touches_trunc(expr, axis):
            signs.append(_symbolic_sign(expr, axis))
            continue
        if mirror is None:
            mirror = space.reflection_map(axis)
            if mirror is None:
                return None
        vals = eval_expr(expr, space.points)
        refl = vals[mirror]
        if np.array_equal(refl, vals):
            signs.append(1)
        elif np.array_equal(refl, -vals):
            signs.append(-1)
        else:
            return None
    return tuple(signs)


def scale_factors(vec, t):
    """Diagonal ``Q`` with ``e(T x) == Q e(x)`` for ``T = diag(t)``, or None.

    Truncated powers with a nonzero shift on a rescaled axis have no such
    factor.
    """
    out = []
    for expr in vec.exprs:
        if isinstance(expr, Const):
            out.append(1.0)
            continue
        c = 1.0
        for f in expr.factors:
            tr = float(t[f.var - 1])
            if isinstance(f, TruncPow) and f.shift != 0.0 and tr != 1.0:
                return None
            c *= tr**f.exponent
        out.append(c)
    return np.array(out)
