"""Conforming Lagrange Poisson solves with homogeneous Dirichlet data.

Used for the discrete data chain (a sequence of Poisson problems whose last
symmetric gradient is an exactly representable right-hand side tensor) and
for recovering the primal variable from a discrete stress.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fespace import LagrangeSpace
from .fields import PiecewiseField
from .mesh import Triangulation
from .quadrature import triangle_rule
from .sparsesolve import cg_solve

__all__ = [
    "LagrangeField",
    "stiffness_matrix",
    "poisson_solve",
    "sym_grad_values",
    "build_phi_chain",
    "recover_primal",
]


@dataclass
class LagrangeField:
    """``ncomp`` scalar Lagrange functions sharing one space; ``coeffs`` is ``(ncomp, ndofs)``."""

    space: LagrangeSpace
    coeffs: np.ndarray

    @property
    def degree(self) -> int:
        return self.space.degree

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[0]

    def __call__(self, mesh: Triangulation, lam: np.ndarray) -> np.ndarray:
        if mesh is not self.space.mesh:
            raise ValueError("LagrangeField can only be evaluated on its own mesh")
        return np.stack([self.space.evaluate(c, lam) for c in self.coeffs], axis=-1)

    def gradients(self, lam: np.ndarray) -> np.ndarray:
        """``(nelem, nq, ncomp, 2)``."""
        return np.stack([self.space.evaluate_grad(c, lam) for c in self.coeffs], axis=2)


def stiffness_matrix(space: LagrangeSpace) -> sp.csr_matrix:
    rule = triangle_rule(2 * (space.degree - 1))
    g = space.grad_basis(rule.points)
    wa = rule.weights[None, :] * space.mesh.areas[:, None]
    loc = np.einsum("tq,tqaj,tqbj->tab", wa, g, g)
    cd = space.cell_dofs
    rows = np.broadcast_to(cd[:, :, None], loc.shape).ravel()
    cols = np.broadcast_to(cd[:, None, :], loc.shape).ravel()
    a = sp.csr_matrix((loc.ravel(), (rows, cols)), shape=(space.ndofs, space.ndofs))
    a.sum_duplicates()
    return a


def _load(space: LagrangeSpace, g=None, G=None) -> np.ndarray:
    """``(g, v) + (G, grad v)`` for all basis functions ``v``.

    ``g`` and ``G`` are callables ``(mesh, lam) -> (nelem, nq)`` and
    ``(nelem, nq, 2)`` with a ``degree`` attribute.
    """
    mesh = space.mesh
    b = np.zeros(space.ndofs)
    cd = space.cell_dofs.ravel()
    if g is not None:
        rule = triangle_rule(space.degree + int(g.degree))
        val, _ = space.basis(rule.points)
        wa = rule.weights[None, :] * mesh.areas[:, None]
        loc = np.einsum("tq,tq,qa->ta", wa, g(mesh, rule.points), val)
        np.add.at(b, cd, loc.ravel())
    if G is not None:
        rule = triangle_rule(space.degree - 1 + int(G.degree))
        gr = space.grad_basis(rule.points)
        wa = rule.weights[None, :] * mesh.areas[:, None]
        loc = np.einsum("tq,tqj,tqaj->ta", wa, G(mesh, rule.points), gr)
        np.add.at(b, cd, loc.ravel())
    return b


class _Component:
    """Select one component of a vector-valued field (or a pair as a gradient-like vector)."""

    def __init__(self, field, idx):
        self.field = field
        self.idx = idx
        self.degree = field.degree

    def __call__(self, mesh, lam):
        return self.field(mesh, lam)[..., self.idx]


def poisson_solve(space: LagrangeSpace, g=None, G=None, tol: float = 1e-12, stiffness=None) -> np.ndarray:
    """Solve ``(grad w, grad v) = (g, v) + (G, grad v)`` with ``w = 0`` on the boundary."""
    a = stiffness_matrix(space) if stiffness is None else stiffness
    b = _load(space, g, G)
    free = np.setdiff1d(np.arange(space.ndofs), space.boundary_dofs)
    w = np.zeros(space.ndofs)
    if len(free):
        res = cg_solve(a[free][:, free], b[free], tol=tol)
        w[free] = res.x
    return w


def sym_grad_values(grads: np.ndarray) -> np.ndarray:
    """Reduced sym gradient from component gradients ``(..., l+1, 2)`` -> ``(..., l+2)``."""
    n = grads.shape[-2]  # l + 1
    out = np.zeros(grads.shape[:-2] + (n + 1,))
    for k in range(n + 1):
        if k > 0:
            out[..., k] += k / n * grads[..., k - 1, 0]
        if k < n:
            out[..., k] += (n - k) / n * grads[..., k, 1]
    return out


class _SymGrad:
    def __init__(self, field: LagrangeField):
        self.field = field
        self.degree = field.degree - 1
        self.ncomp = field.ncomp + 1

    def __call__(self, mesh, lam):
        if mesh is not self.field.space.mesh:
            raise ValueError("field lives on a different mesh")
        return sym_grad_values(self.field.gradients(lam))


def build_phi_chain(f, m: int, mesh: Triangulation, degree: int, tol: float = 1e-12):
    """Discrete data ``sym grad w_m`` from ``-Δ w_1 = f``, ``-Δ w_j = sym grad w_{j-1}``.

    Returns a ``PiecewiseField`` of element-wise degree ``degree - 1`` with
    ``m + 1`` reduced components.  ``f`` is any callable ``(mesh, lam)`` with a
    ``degree`` (a ``PolyField`` with one component, or a ``BivariatePoly``).
    """
    from .fields import PolyField
    from .symtensor import BivariatePoly

    if isinstance(f, BivariatePoly):
        f = PolyField([f])
    space = LagrangeSpace(mesh, degree)
    a = stiffness_matrix(space)
    w = LagrangeField(space, poisson_solve(space, g=_Component(f, 0), tol=tol, stiffness=a)[None, :])
    for _ in range(1, m):
        rhs = _SymGrad(w)
        comps = [poisson_solve(space, g=_Component(rhs, c), tol=tol, stiffness=a) for c in range(rhs.ncomp)]
        w = LagrangeField(space, np.array(comps))
    return PiecewiseField.from_values(mesh, degree - 1, _SymGrad(w))


class _StressPair:
    """``(s_{c+1}, s_c)`` of a reduced field, i.e. the part that should equal grad of component c."""

    def __init__(self, field, c):
        self.field = field
        self.c = c
        self.degree = field.degree

    def __call__(self, mesh, lam):
        v = self.field(mesh, lam)
        return np.stack([v[..., self.c + 1], v[..., self.c]], axis=-1)


def recover_primal(sigma_field, m: int, mesh: Triangulation, degree: int, tol: float = 1e-12) -> list:
    """Recover ``u_{m-1}, ..., u_0`` from a discrete stress by successive Poisson solves.

    Each stage solves ``(grad u_j[c], grad v) = ((u_{j+1}[c+1], u_{j+1}[c]), grad v)``.
    Returns ``[u_0, u_1, ..., u_{m-1}]`` as ``LagrangeField`` objects.
    """
    space = LagrangeSpace(mesh, degree)
    a = stiffness_matrix(space)
    current = sigma_field
    out = []
    for j in range(m - 1, -1, -1):
        comps = [poisson_solve(space, G=_StressPair(current, c), tol=tol, stiffness=a) for c in range(j + 1)]
        current = LagrangeField(space, np.array(comps))
        out.append(current)
    return out[::-1]
