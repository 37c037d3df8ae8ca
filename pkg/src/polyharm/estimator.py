"""Residual estimator λ and data oscillation μ, element by element."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fespace import StressSpace, project_X
from .quadrature import edge_rule, triangle_rule
from .symtensor import binomial_weights

__all__ = [
    "IndicatorField",
    "estimate_lambda",
    "estimate_mu",
    "sigma_error",
    "curl_values",
    "tangential_trace",
    "volume_terms",
    "edge_terms",
]


@dataclass(frozen=True)
class IndicatorField:
    lambda2: np.ndarray
    mu2: np.ndarray

    def __post_init__(self):
        if self.lambda2.shape != self.mu2.shape:
            raise ValueError("indicator arrays differ in length")

    @property
    def lambda2_total(self) -> float:
        return float(self.lambda2.sum())

    @property
    def mu2_total(self) -> float:
        return float(self.mu2.sum())


def curl_values(grads: np.ndarray) -> np.ndarray:
    """Row-wise curl from component gradients ``(..., m+1, 2)`` -> ``(..., m)``."""
    return grads[..., :-1, 0] - grads[..., 1:, 1]


def tangential_trace(vals: np.ndarray, t: np.ndarray) -> np.ndarray:
    """``sigma . t`` from values ``(..., m+1)`` and tangents ``(..., 2)`` -> ``(..., m)``."""
    return vals[..., 1:] * t[..., None, 0] + vals[..., :-1] * t[..., None, 1]


def volume_terms(space: StressSpace, sigma: np.ndarray) -> np.ndarray:
    """Per-element ``||curl sigma||^2_T`` (unscaled)."""
    mesh = space.mesh
    if space.k == 0:
        return np.zeros(mesh.nelem)
    rule = triangle_rule(2 * (space.k - 1))
    xy = np.einsum("qi,tij->tqj", rule.points, mesh.corners)
    c = curl_values(space.evaluate_grad(sigma, xy, np.arange(mesh.nelem)[:, None]))
    return np.einsum("q,tqc,c->t", rule.weights, c**2, binomial_weights(space.m - 1)) * mesh.areas


def edge_terms(space: StressSpace, sigma: np.ndarray) -> np.ndarray:
    """Per-edge ``||[sigma] . tau_E||^2_E``; on boundary edges the jump is the trace."""
    mesh = space.mesh
    er = edge_rule(2 * space.k + 2)
    a, b, length, _, tangent = mesh.edge_geometry
    pts = a[:, None, :] + er.points[None, :, None] * (b - a)[:, None, :]
    tp = mesh.edge_elems[:, 0]
    tm = mesh.edge_elems[:, 1]
    jump = space.evaluate(sigma, pts, tp[:, None])
    inner = tm >= 0
    if inner.any():
        jump[inner] -= space.evaluate(sigma, pts[inner], tm[inner][:, None])
    tr = tangential_trace(jump, np.broadcast_to(tangent[:, None, :], pts.shape))
    return np.einsum("q,eqc,c->e", er.weights, tr**2, binomial_weights(space.m - 1)) * length


def estimate_lambda(space: StressSpace, sigma: np.ndarray) -> np.ndarray:
    """Per-element λ²: ``h_T^2 ||curl sigma||^2_T + h_T`` times the jump terms of its edges.

    An interior edge counts for both neighbours, each with its own ``h_T``.
    """
    mesh = space.mesh
    out = mesh.h**2 * volume_terms(space, sigma)
    edge = edge_terms(space, sigma)
    tp = mesh.edge_elems[:, 0]
    tm = mesh.edge_elems[:, 1]
    inner = tm >= 0
    np.add.at(out, tp, mesh.h[tp] * edge)
    np.add.at(out, tm[inner], mesh.h[tm[inner]] * edge[inner])
    return out


def estimate_mu(field, space: StressSpace, projection: np.ndarray | None = None) -> np.ndarray:
    """Per-element μ² = ||sym φ - Π_k sym φ||²_T."""
    mesh = space.mesh
    if projection is None:
        projection = project_X(field, space)
    deg = max(int(field.degree), space.k)
    rule = triangle_rule(2 * deg)
    xy = np.einsum("qi,tij->tqj", rule.points, mesh.corners)
    vals = field(mesh, rule.points) - space.evaluate(projection, xy, np.arange(mesh.nelem)[:, None])
    return np.einsum("q,tqc,c->t", rule.weights, vals**2, space.weights) * mesh.areas


def sigma_error(space: StressSpace, sigma: np.ndarray, exact) -> float:
    """``||exact - sigma_h||`` with binomially weighted components."""
    mesh = space.mesh
    rule = triangle_rule(2 * max(space.k, int(exact.degree)))
    xy = np.einsum("qi,tij->tqj", rule.points, mesh.corners)
    d = exact(mesh, rule.points) - space.evaluate(sigma, xy, np.arange(mesh.nelem)[:, None])
    return float(np.sqrt(np.einsum("q,t,tqc,c->", rule.weights, mesh.areas, d**2, space.weights)))
