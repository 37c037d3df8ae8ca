"""Quadrature on triangles (collapsed Gauss-Jacobi) and on edges (Gauss-Legendre)."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points ``(n, 3)`` and weights summing to one.

    Multiplying the weights by the triangle area integrates every polynomial
    of total degree ``<= degree`` exactly.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int


@dataclass(frozen=True)
class EdgeRule:
    """Points in ``[0, 1]`` and weights summing to one."""

    points: np.ndarray
    weights: np.ndarray
    degree: int


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    degree = max(int(degree), 0)
    n = degree // 2 + 1
    # Collapse s = u, t = (1 - u) v with Gauss-Jacobi(1, 0) in u absorbing the Jacobian.
    gu, wu = roots_jacobi(n, 1.0, 0.0)
    gv, wv = leggauss(n)
    u = (gu + 1.0) / 2.0
    v = (gv + 1.0) / 2.0
    wu = wu / 4.0
    wv = wv / 2.0
    s = np.repeat(u, n)
    t = (1.0 - s) * np.tile(v, n)
    w = np.outer(wu, wv).ravel() * 2.0
    lam = np.column_stack([1.0 - s - t, s, t])
    w.setflags(write=False)
    lam.setflags(write=False)
    return QuadratureRule(lam, w, 2 * n - 1)


@lru_cache(maxsize=None)
def edge_rule(degree: int) -> EdgeRule:
    degree = max(int(degree), 0)
    n = degree // 2 + 1
    g, w = leggauss(n)
    pts = (g + 1.0) / 2.0
    w = w / 2.0
    pts.setflags(write=False)
    w.setflags(write=False)
    return EdgeRule(pts, w, 2 * n - 1)
