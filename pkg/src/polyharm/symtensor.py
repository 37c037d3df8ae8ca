"""Reduced algebra for symmetric tensors over R^2 and exact bivariate polynomials.

A symmetric l-tensor is stored through its l+1 distinct components: ``comps[k]``
is the value shared by every index tuple containing exactly ``k`` ones (and
``l - k`` twos).  The full tensor entry count for ``comps[k]`` is ``C(l, k)``,
which is the weight that appears in every inner product.

The differential operators are described by :class:`OperatorMatrix` objects
whose entries are ``(coefficient, direction)`` pairs acting on scalar fields.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import comb, factorial
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "SymTensor",
    "BivariatePoly",
    "OperatorMatrix",
    "binomial_weights",
    "sym_inner",
    "sym_part",
    "sym_curl_matrix",
    "curl_matrix",
    "div_matrix",
    "sym_grad_matrix",
    "dot_tangent",
    "dm_apply",
    "divm_apply",
    "full_curl",
    "curl_inner_integrand",
]


def binomial_weights(order: int) -> np.ndarray:
    """Multiplicities ``C(order, k)`` of the reduced components."""
    return np.array([comb(order, k) for k in range(order + 1)], dtype=float)


@dataclass(frozen=True)
class SymTensor:
    order: int
    comps: tuple

    def __post_init__(self):
        if self.order < 0:
            raise ValueError("tensor order must be non-negative")
        comps = tuple(float(c) for c in self.comps)
        if len(comps) != self.order + 1:
            raise ValueError(
                f"order {self.order} needs {self.order + 1} components, got {len(comps)}"
            )
        object.__setattr__(self, "comps", comps)

    @classmethod
    def from_full(cls, full) -> "SymTensor":
        full = np.asarray(full, dtype=float)
        return sym_part(full, full.ndim)

    def expand(self) -> np.ndarray:
        """Full tensor of shape ``(2,) * order``; axis value 0 is index 1."""
        out = np.empty((2,) * self.order)
        for idx in itertools.product((0, 1), repeat=self.order):
            out[idx] = self.comps[idx.count(0)]
        return out


def sym_inner(a: SymTensor, b: SymTensor) -> float:
    if a.order != b.order:
        raise ValueError(f"order mismatch: {a.order} != {b.order}")
    w = binomial_weights(a.order)
    return float(np.dot(w, np.multiply(a.comps, b.comps)))


def sym_part(full, order: int) -> SymTensor:
    """Average of ``full`` over all index permutations."""
    arr = np.asarray(full, dtype=float)
    if arr.size != 2**order:
        raise ValueError(f"expected {2 ** order} entries for order {order}, got {arr.size}")
    arr = arr.reshape((2,) * order)
    sums = np.zeros(order + 1)
    for idx in itertools.product((0, 1), repeat=order):
        sums[idx.count(0)] += arr[idx]
    return SymTensor(order, tuple(sums / binomial_weights(order)))


class BivariatePoly:
    """Polynomial in ``x, y`` with exact rational coefficients.

    Instances are immutable; the coefficient table maps ``(a, b)`` to the
    coefficient of ``x**a * y**b``.
    """

    __slots__ = ("_c",)

    def __init__(self, coeffs=None):
        table = {}
        for (a, b), c in (coeffs or {}).items():
            c = Fraction(c)
            if c != 0:
                table[(int(a), int(b))] = c
        self._c = table

    @classmethod
    def const(cls, c) -> "BivariatePoly":
        return cls({(0, 0): c})

    @classmethod
    def x(cls) -> "BivariatePoly":
        return cls({(1, 0): 1})

    @classmethod
    def y(cls) -> "BivariatePoly":
        return cls({(0, 1): 1})

    @classmethod
    def monomial(cls, a: int, b: int, c=1) -> "BivariatePoly":
        return cls({(a, b): c})

    @property
    def coeffs(self) -> dict:
        return dict(self._c)

    def is_zero(self) -> bool:
        return not self._c

    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((a + b for a, b in self._c), default=-1)

    @property
    def max_degrees(self) -> tuple:
        return (
            max((a for a, _ in self._c), default=0),
            max((b for _, b in self._c), default=0),
        )

    @staticmethod
    def _lift(other) -> "BivariatePoly":
        if isinstance(other, BivariatePoly):
            return other
        return BivariatePoly.const(other)

    def __add__(self, other):
        other = self._lift(other)
        out = dict(self._c)
        for k, c in other._c.items():
            out[k] = out.get(k, 0) + c
        return BivariatePoly(out)

    __radd__ = __add__

    def __neg__(self):
        return BivariatePoly({k: -c for k, c in self._c.items()})

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        other = self._lift(other)
        out: dict = {}
        for (a1, b1), c1 in self._c.items():
            for (a2, b2), c2 in other._c.items():
                key = (a1 + a2, b1 + b2)
                out[key] = out.get(key, 0) + c1 * c2
        return BivariatePoly(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, BivariatePoly):
            raise TypeError("division by a polynomial is not supported")
        d = Fraction(other)
        return BivariatePoly({k: c / d for k, c in self._c.items()})

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative powers are not polynomials")
        out = BivariatePoly.const(1)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = BivariatePoly.const(other)
        if not isinstance(other, BivariatePoly):
            return NotImplemented
        return self._c == other._c

    def __hash__(self):
        return hash(frozenset(self._c.items()))

    def __repr__(self):
        if not self._c:
            return "BivariatePoly(0)"
        terms = [f"{c}*x^{a}*y^{b}" for (a, b), c in sorted(self._c.items())]
        return "BivariatePoly(" + " + ".join(terms) + ")"

    def diff(self, var: str, times: int = 1) -> "BivariatePoly":
        p = self
        for _ in range(times):
            out = {}
            for (a, b), c in p._c.items():
                if var == "x" and a > 0:
                    out[(a - 1, b)] = c * a
                elif var == "y" and b > 0:
                    out[(a, b - 1)] = c * b
                elif var not in ("x", "y"):
                    raise ValueError(f"unknown variable {var!r}")
            p = BivariatePoly(out)
        return p

    def antiderivative(self, var: str) -> "BivariatePoly":
        """Antiderivative vanishing on ``var = 0``."""
        out = {}
        for (a, b), c in self._c.items():
            if var == "x":
                out[(a + 1, b)] = c / (a + 1)
            elif var == "y":
                out[(a, b + 1)] = c / (b + 1)
            else:
                raise ValueError(f"unknown variable {var!r}")
        return BivariatePoly(out)

    def laplacian(self) -> "BivariatePoly":
        return self.diff("x", 2) + self.diff("y", 2)

    def __call__(self, x, y):
        """Exact for Fraction/int arguments, floating point for floats/arrays."""
        if isinstance(x, (int, Fraction)) and isinstance(y, (int, Fraction)):
            return sum((c * Fraction(x) ** a * Fraction(y) ** b for (a, b), c in self._c.items()), Fraction(0))
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        if not self._c:
            return out
        amax, bmax = self.max_degrees
        xp = [np.ones_like(x)]
        for _ in range(amax):
            xp.append(xp[-1] * x)
        yp = [np.ones_like(y)]
        for _ in range(bmax):
            yp.append(yp[-1] * y)
        for (a, b), c in self._c.items():
            out = out + float(c) * xp[a] * yp[b]
        return out

    def compose_affine(self, x_map: "BivariatePoly", y_map: "BivariatePoly") -> "BivariatePoly":
        """Substitute ``x -> x_map(s, t)`` and ``y -> y_map(s, t)``."""
        amax, bmax = self.max_degrees
        xp = [BivariatePoly.const(1)]
        for _ in range(amax):
            xp.append(xp[-1] * x_map)
        yp = [BivariatePoly.const(1)]
        for _ in range(bmax):
            yp.append(yp[-1] * y_map)
        out = BivariatePoly()
        for (a, b), c in self._c.items():
            out = out + c * xp[a] * yp[b]
        return out

    def integrate_rect(self, x0, x1, y0, y1) -> Fraction:
        big = self.antiderivative("x").antiderivative("y")
        x0, x1, y0, y1 = (Fraction(v) for v in (x0, x1, y0, y1))
        return big(x1, y1) - big(x0, y1) - big(x1, y0) + big(x0, y0)

    def integrate_triangle(self, p0, p1, p2) -> Fraction:
        """Exact integral over the triangle with rational vertices ``p0, p1, p2``."""
        p0, p1, p2 = ([Fraction(c) for c in p] for p in (p0, p1, p2))
        s, t = BivariatePoly.x(), BivariatePoly.y()
        xm = p0[0] + (p1[0] - p0[0]) * s + (p2[0] - p0[0]) * t
        ym = p0[1] + (p1[1] - p0[1]) * s + (p2[1] - p0[1]) * t
        jac = abs((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
        q = self.compose_affine(xm, ym)
        ref = sum(
            (c * Fraction(factorial(a) * factorial(b), factorial(a + b + 2)) for (a, b), c in q._c.items()),
            Fraction(0),
        )
        return jac * ref


@dataclass(frozen=True)
class OperatorMatrix:
    """Sparse first-order operator between reduced component vectors.

    ``entries[r][c]`` is ``None`` or a pair ``(coefficient, direction)`` with
    direction one of ``"x"``, ``"y"`` or ``None`` (no derivative).
    """

    rows: int
    cols: int
    entries: tuple

    def apply(self, fields: Sequence[BivariatePoly]) -> list:
        if len(fields) != self.cols:
            raise ValueError(f"expected {self.cols} input fields, got {len(fields)}")
        out = []
        for r in range(self.rows):
            acc = BivariatePoly()
            for c in range(self.cols):
                e = self.entries[r][c]
                if e is None:
                    continue
                coef, direction = e
                term = fields[c] if direction is None else fields[c].diff(direction)
                acc = acc + coef * term
            out.append(acc)
        return out

    def nonzeros(self) -> Iterable:
        """Yield ``(row, col, coefficient, direction)`` for every nonzero entry."""
        for r in range(self.rows):
            for c in range(self.cols):
                e = self.entries[r][c]
                if e is not None:
                    yield r, c, e[0], e[1]

    def symbol(self, xi) -> np.ndarray:
        """Replace d/dx by ``xi[0]`` and d/dy by ``xi[1]``."""
        out = np.zeros((self.rows, self.cols))
        for r, c, coef, direction in self.nonzeros():
            factor = {"x": xi[0], "y": xi[1], None: 1.0}[direction]
            out[r, c] += float(coef) * factor
        return out


def _build(rows, cols, terms) -> OperatorMatrix:
    table = [[None] * cols for _ in range(rows)]
    for r, c, coef, direction in terms:
        if coef != 0:
            table[r][c] = (Fraction(coef), direction)
    return OperatorMatrix(rows, cols, tuple(tuple(row) for row in table))


def sym_curl_matrix(m: int) -> OperatorMatrix:
    """``(m+1) x m`` operator mapping S(m-1) fields to sym Curl in S(m)."""
    if m < 1:
        raise ValueError("sym Curl needs m >= 1")
    terms = []
    for k in range(m + 1):
        if k < m:
            terms.append((k, k, Fraction(m - k, m), "x"))
        if k >= 1:
            terms.append((k, k - 1, -Fraction(k, m), "y"))
    return _build(m + 1, m, terms)


def curl_matrix(m: int) -> OperatorMatrix:
    """``m x (m+1)`` operator: (curl s)_k = d/dx s_k - d/dy s_{k+1}."""
    if m < 1:
        raise ValueError("curl needs m >= 1")
    terms = []
    for k in range(m):
        terms.append((k, k, 1, "x"))
        terms.append((k, k + 1, -1, "y"))
    return _build(m, m + 1, terms)


def div_matrix(m: int) -> OperatorMatrix:
    """``m x (m+1)`` operator: (div s)_k = d/dx s_{k+1} + d/dy s_k."""
    if m < 1:
        raise ValueError("div needs m >= 1")
    terms = []
    for k in range(m):
        terms.append((k, k + 1, 1, "x"))
        terms.append((k, k, 1, "y"))
    return _build(m, m + 1, terms)


def sym_grad_matrix(order: int) -> OperatorMatrix:
    """``(order+2) x (order+1)`` operator mapping b in S(order) to sym(D b)."""
    if order < 0:
        raise ValueError("order must be non-negative")
    n = order + 1
    terms = []
    for k in range(n + 1):
        if k >= 1:
            terms.append((k, k - 1, Fraction(k, n), "x"))
        if k < n:
            terms.append((k, k, Fraction(n - k, n), "y"))
    return _build(n + 1, n, terms)


def dot_tangent(sigma: SymTensor, t) -> SymTensor:
    """Contraction of the last index: (sigma . t)_k = s_{k+1} t_1 + s_k t_2."""
    m = sigma.order
    if m < 1:
        raise ValueError("cannot contract a scalar")
    s = sigma.comps
    return SymTensor(m - 1, tuple(s[k + 1] * t[0] + s[k] * t[1] for k in range(m)))


def dm_apply(u: BivariatePoly, m: int) -> list:
    """Reduced components of D^m u: entry k is d^m u / dx^k dy^(m-k)."""
    if m < 0:
        raise ValueError("m must be non-negative")
    return [u.diff("x", k).diff("y", m - k) for k in range(m + 1)]


def divm_apply(comps: Sequence[BivariatePoly]) -> BivariatePoly:
    """m-fold divergence of a symmetric field given by reduced components."""
    m = len(comps) - 1
    out = BivariatePoly()
    for k, s in enumerate(comps):
        out = out + comb(m, k) * s.diff("x", k).diff("y", m - k)
    return out


def full_curl(beta: Sequence[BivariatePoly]) -> list:
    """Curl of an S(m-1) field as ``m`` pairs ``(last index 1, last index 2)``.

    Entry ``[k]`` stands for every full index tuple whose first ``m-1`` indices
    carry ``k`` ones; it holds ``(-d b_k/dy, d b_k/dx)``.
    """
    if len(beta) < 1:
        raise ValueError("need at least one component")
    return [(-b.diff("y"), b.diff("x")) for b in beta]


def curl_inner_integrand(beta: Sequence[BivariatePoly], gamma: Sequence[BivariatePoly]) -> BivariatePoly:
    """Pointwise Curl beta : Curl gamma for S(m-1) fields, as a polynomial."""
    if len(beta) != len(gamma):
        raise ValueError("order mismatch")
    order = len(beta) - 1
    out = BivariatePoly()
    for k, (cb, cg) in enumerate(zip(full_curl(beta), full_curl(gamma))):
        out = out + comb(order, k) * (cb[0] * cg[0] + cb[1] * cg[1])
    return out
