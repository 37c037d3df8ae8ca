"""Data fields evaluated at quadrature points.

Both field types are callables ``field(mesh, lam) -> (nelem, nq, ncomp)``
with a ``degree`` attribute used to choose quadrature orders.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fespace import monomial_exponents
from .mesh import Triangulation, ancestor_map
from .symtensor import BivariatePoly


def _physical(mesh: Triangulation, lam: np.ndarray) -> np.ndarray:
    return np.einsum("qi,tij->tqj", np.atleast_2d(lam), mesh.corners)


@dataclass(frozen=True)
class PolyField:
    """Global polynomial field given by reduced components."""

    comps: tuple

    def __init__(self, comps: Sequence[BivariatePoly]):
        object.__setattr__(self, "comps", tuple(comps))

    @property
    def ncomp(self) -> int:
        return len(self.comps)

    @property
    def degree(self) -> int:
        return max((c.degree for c in self.comps if not c.is_zero()), default=0)

    def at(self, x, y) -> np.ndarray:
        return np.stack([np.broadcast_to(np.asarray(c(x, y), dtype=float), np.shape(x)) for c in self.comps], axis=-1)

    def __call__(self, mesh: Triangulation, lam: np.ndarray) -> np.ndarray:
        xy = _physical(mesh, lam)
        return self.at(xy[..., 0], xy[..., 1])


class PiecewiseField:
    """Element-wise polynomial field on ``mesh`` in scaled monomials.

    ``coeffs`` has shape ``(nelem, ncomp, nk)``.  Evaluation on a refinement of
    ``mesh`` goes through the genealogy, so the field can be compared across
    nested meshes.
    """

    def __init__(self, mesh: Triangulation, coeffs: np.ndarray, degree: int):
        self.mesh = mesh
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.degree = int(degree)
        self.exps = monomial_exponents(self.degree)
        if self.coeffs.shape[0] != mesh.nelem or self.coeffs.shape[2] != len(self.exps):
            raise ValueError("coefficient array does not match mesh and degree")

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[1]

    def _basis(self, xy: np.ndarray, elems: np.ndarray) -> np.ndarray:
        c = self.mesh.centroids[elems][:, None, :]
        h = self.mesh.h[elems][:, None]
        s = (xy[..., 0] - c[..., 0]) / h
        t = (xy[..., 1] - c[..., 1]) / h
        return np.stack([s**a * t**b for a, b in self.exps], axis=-1)

    def __call__(self, mesh: Triangulation, lam: np.ndarray) -> np.ndarray:
        xy = _physical(mesh, lam)
        if mesh is self.mesh:
            elems = np.arange(mesh.nelem)
        else:
            elems = ancestor_map(mesh, self.mesh)
        phi = self._basis(xy, elems)
        return np.einsum("tqp,tcp->tqc", phi, self.coeffs[elems])

    @classmethod
    def from_values(cls, mesh: Triangulation, degree: int, func) -> "PiecewiseField":
        """Fit ``func(mesh, lam) -> (nelem, nq, ncomp)`` exactly when it is element-wise P_degree."""
        from .quadrature import triangle_rule

        rule = triangle_rule(2 * degree)
        vals = func(mesh, rule.points)
        xy = _physical(mesh, rule.points)
        tmp = cls.__new__(cls)
        tmp.mesh = mesh
        tmp.exps = monomial_exponents(degree)
        phi = tmp._basis(xy, np.arange(mesh.nelem))
        w = rule.weights
        gram = np.einsum("q,tqa,tqb->tab", w, phi, phi)
        rhs = np.einsum("q,tqa,tqc->tca", w, phi, vals)
        coeffs = np.linalg.solve(gram[:, None], rhs[..., None])[..., 0]
        return cls(mesh, coeffs, degree)
