"""Discrete spaces of the mixed scheme.

``StressSpace`` is the discontinuous space of piecewise degree-``k``
polynomials with values in S(m), stored per element as ``(m+1, nk)``
coefficients of scaled monomials.  ``LagrangeSpace`` is the scalar
continuous Lagrange space; the potential space is ``m`` copies of it
(one per reduced S(m-1) component) together with the side constraints
collected in ``MixedSpaces.constraints``.
"""

from __future__ import annotations

from functools import cached_property
from math import comb

import numpy as np

from .mesh import Triangulation
from .quadrature import triangle_rule
from .symtensor import BivariatePoly, binomial_weights

__all__ = [
    "LagrangeSpace",
    "StressSpace",
    "MixedSpaces",
    "build_spaces",
    "kernel_basis",
    "project_X",
    "lattice",
    "monomial_exponents",
]

SUPPORTED_M = (1, 2, 3)


def lattice(degree: int) -> np.ndarray:
    """Barycentric lattice indices ``(n0, n1, n2)`` with ``n0+n1+n2 = degree``.

    Ordered vertices first, then edge nodes (edge 0-1, 1-2, 2-0, each from its
    first to its second vertex), then interior nodes.
    """
    d = degree
    if d == 0:
        return np.array([[0, 0, 0]])
    nodes = [(d, 0, 0), (0, d, 0), (0, 0, d)]
    for a, b in ((0, 1), (1, 2), (2, 0)):
        for s in range(1, d):
            n = [0, 0, 0]
            n[a] = d - s
            n[b] = s
            nodes.append(tuple(n))
    for i in range(1, d):
        for j in range(1, d - i):
            nodes.append((d - i - j, i, j))
    return np.array(nodes)


def _silvester(z: np.ndarray, n: int, d: int):
    """Value and derivative of prod_{s<n} (d z - s) / (s + 1)."""
    val = np.ones_like(z)
    der = np.zeros_like(z)
    for s in range(n):
        f = (d * z - s) / (s + 1)
        der = der * f + val * (d / (s + 1))
        val = val * f
    return val, der


class LagrangeSpace:
    """Continuous scalar Lagrange elements of degree ``degree >= 1``."""

    def __init__(self, mesh: Triangulation, degree: int):
        if degree < 1:
            raise ValueError("continuous Lagrange elements need degree >= 1")
        self.mesh = mesh
        self.degree = degree
        self.local_nodes = lattice(degree)
        self.nloc = len(self.local_nodes)
        self._number()

    def _number(self):
        mesh = self.mesh
        d = self.degree
        t = mesh.triangles
        nt = mesh.nelem
        # key each node by its sorted (vertex, lattice weight) pairs
        vid = np.broadcast_to(t[:, None, :], (nt, self.nloc, 3))
        w = np.broadcast_to(self.local_nodes[None, :, :], (nt, self.nloc, 3))
        vid_masked = np.where(w > 0, vid, -1)
        w_masked = np.where(w > 0, w, 0)
        order = np.argsort(vid_masked, axis=2, kind="stable")
        vs = np.take_along_axis(vid_masked, order, axis=2)
        ws = np.take_along_axis(w_masked, order, axis=2)
        keys = np.concatenate([vs, ws], axis=2).reshape(-1, 6)
        # vertex nodes keep the vertex number; others follow in key order
        uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        is_vertex = (uniq[:, 5] == d) & (uniq[:, 3] == 0) & (uniq[:, 4] == 0)
        remap = np.empty(len(uniq), dtype=np.int64)
        remap[is_vertex] = uniq[is_vertex, 2]
        nv = mesh.nvert
        others = np.flatnonzero(~is_vertex)
        remap[others] = nv + np.arange(len(others))
        self.cell_dofs = remap[inverse].reshape(nt, self.nloc)
        self.ndofs = nv + len(others)
        coords = np.zeros((self.ndofs, 2))
        lam = self.local_nodes / d
        xy = np.einsum("ni,tij->tnj", lam, mesh.corners)
        coords[self.cell_dofs.reshape(-1)] = xy.reshape(-1, 2)
        self.node_coords = coords
        self.cell_dofs.setflags(write=False)

    @cached_property
    def boundary_dofs(self) -> np.ndarray:
        mesh = self.mesh
        flags = np.zeros(self.ndofs, dtype=bool)
        be = mesh.boundary_edges
        tp = mesh.edge_elems[be, 0]
        lp = mesh.edge_local[be, 0]
        # local nodes on edge j have a zero weight on vertex (j + 2) % 3
        for j in range(3):
            sel = lp == j
            on_edge = np.flatnonzero(self.local_nodes[:, (j + 2) % 3] == 0)
            flags[self.cell_dofs[np.ix_(tp[sel], on_edge)].reshape(-1)] = True
        return np.flatnonzero(flags)

    def basis(self, lam: np.ndarray):
        """Values ``(nq, nloc)`` and barycentric derivatives ``(nq, nloc, 3)``."""
        lam = np.atleast_2d(lam)
        d = self.degree
        nq = len(lam)
        dval = np.zeros((nq, self.nloc, 3))
        vals = []
        ders = []
        for i in range(3):
            v_i = np.empty((nq, self.nloc))
            d_i = np.empty((nq, self.nloc))
            for a, n in enumerate(self.local_nodes[:, i]):
                v_i[:, a], d_i[:, a] = _silvester(lam[:, i], int(n), d)
            vals.append(v_i)
            ders.append(d_i)
        val = vals[0] * vals[1] * vals[2]
        dval[:, :, 0] = ders[0] * vals[1] * vals[2]
        dval[:, :, 1] = vals[0] * ders[1] * vals[2]
        dval[:, :, 2] = vals[0] * vals[1] * ders[2]
        return val, dval

    def grad_basis(self, lam: np.ndarray, elems=None) -> np.ndarray:
        """Physical gradients ``(nelem, nq, nloc, 2)`` at barycentric points."""
        _, dval = self.basis(lam)
        gl = self.mesh.grad_lambda if elems is None else self.mesh.grad_lambda[elems]
        return np.einsum("qai,tij->tqaj", dval, gl)

    def evaluate(self, coeffs: np.ndarray, lam: np.ndarray) -> np.ndarray:
        """Values ``(nelem, nq)`` of a coefficient vector at barycentric points."""
        val, _ = self.basis(lam)
        return np.einsum("qa,ta->tq", val, coeffs[self.cell_dofs])

    def evaluate_grad(self, coeffs: np.ndarray, lam: np.ndarray) -> np.ndarray:
        """Gradients ``(nelem, nq, 2)``."""
        g = self.grad_basis(lam)
        return np.einsum("tqaj,ta->tqj", g, coeffs[self.cell_dofs])

    def interpolate(self, func) -> np.ndarray:
        x = self.node_coords
        return np.asarray(func(x[:, 0], x[:, 1]), dtype=float) * np.ones(self.ndofs)


def monomial_exponents(k: int) -> np.ndarray:
    return np.array([(a, n - a) for n in range(k + 1) for a in range(n, -1, -1)])


class StressSpace:
    """Piecewise P_k(T; S(m)) with scaled monomials ((x-xc)/h)^a ((y-yc)/h)^b."""

    def __init__(self, mesh: Triangulation, m: int, k: int):
        self.mesh = mesh
        self.m = m
        self.k = k
        self.exps = monomial_exponents(k)
        self.nk = len(self.exps)
        self.ncomp = m + 1
        self.weights = binomial_weights(m)

    @property
    def dim(self) -> int:
        return self.mesh.nelem * self.ncomp * self.nk

    def dof_index(self, elem, comp, p):
        return (np.asarray(elem) * self.ncomp + comp) * self.nk + p

    def local_coords(self, xy: np.ndarray, elems) -> tuple:
        c = self.mesh.centroids[elems]
        h = self.mesh.h[elems]
        return (xy[..., 0] - c[..., 0]) / h, (xy[..., 1] - c[..., 1]) / h

    def basis_at(self, xy: np.ndarray, elems) -> np.ndarray:
        """Monomial values ``(..., nk)``; ``elems`` broadcasts against ``xy[..., 0]``."""
        s, t = self.local_coords(xy, elems)
        return np.stack([s**a * t**b for a, b in self.exps], axis=-1)

    def basis_grad_at(self, xy: np.ndarray, elems) -> np.ndarray:
        """Physical gradients ``(..., nk, 2)`` of the monomials."""
        s, t = self.local_coords(xy, elems)
        h = self.mesh.h[elems]
        out = np.zeros(s.shape + (self.nk, 2))
        for p, (a, b) in enumerate(self.exps):
            if a > 0:
                out[..., p, 0] = a * s ** (a - 1) * t**b / h
            if b > 0:
                out[..., p, 1] = b * s**a * t ** (b - 1) / h
        return out

    def quad_points(self, degree: int):
        rule = triangle_rule(degree)
        xy = np.einsum("qi,tij->tqj", rule.points, self.mesh.corners)
        return rule, xy

    @cached_property
    def local_mass(self) -> np.ndarray:
        """Scalar mass blocks ``(nelem, nk, nk)`` (without binomial weights)."""
        rule, xy = self.quad_points(2 * self.k)
        elems = np.arange(self.mesh.nelem)[:, None]
        phi = self.basis_at(xy, elems)
        wa = rule.weights[None, :] * self.mesh.areas[:, None]
        mass = np.einsum("tq,tqa,tqb->tab", wa, phi, phi)
        return 0.5 * (mass + mass.transpose(0, 2, 1))

    @cached_property
    def local_mass_inv(self) -> np.ndarray:
        return np.linalg.inv(self.local_mass)

    def evaluate(self, coeffs: np.ndarray, xy: np.ndarray, elems) -> np.ndarray:
        """Values ``(..., m+1)`` of ``coeffs`` (shape ``(nelem, m+1, nk)``)."""
        phi = self.basis_at(xy, elems)
        c = coeffs[elems]
        return np.einsum("...p,...cp->...c", phi, c)

    def evaluate_grad(self, coeffs: np.ndarray, xy: np.ndarray, elems) -> np.ndarray:
        """Gradients ``(..., m+1, 2)``."""
        g = self.basis_grad_at(xy, elems)
        c = coeffs[elems]
        return np.einsum("...pj,...cp->...cj", g, c)

    def zeros(self) -> np.ndarray:
        return np.zeros((self.mesh.nelem, self.ncomp, self.nk))

    def norm(self, coeffs: np.ndarray) -> float:
        w = self.weights
        gram = np.einsum("tab,tca,tcb->tc", self.local_mass, coeffs, coeffs)
        return float(np.sqrt(max((gram * w).sum(), 0.0)))


def project_X(field, space: StressSpace, degree: int | None = None) -> np.ndarray:
    """Element-wise L2 projection of a data field onto ``space``.

    ``field(mesh, lam)`` must return values of shape ``(nelem, nq, m+1)``.
    """
    deg = space.k + (field.degree if degree is None else degree)
    rule = triangle_rule(deg)
    vals = field(space.mesh, rule.points)
    xy = np.einsum("qi,tij->tqj", rule.points, space.mesh.corners)
    elems = np.arange(space.mesh.nelem)[:, None]
    phi = space.basis_at(xy, elems)
    wa = rule.weights[None, :] * space.mesh.areas[:, None]
    rhs = np.einsum("tq,tqp,tqc->tcp", wa, phi, vals)
    return np.einsum("tab,tcb->tca", space.local_mass_inv, rhs)


def kernel_basis(m: int) -> list:
    """Non-constant fields z with sym Curl z = 0, as reduced S(m-1) components."""
    x, y = BivariatePoly.x(), BivariatePoly.y()
    zero = BivariatePoly()
    if m == 1:
        return []
    if m == 2:
        return [[y, x]]
    if m == 3:
        return [
            [y * y, x * y, x * x],
            [zero, y, 2 * x],
            [2 * y, x, zero],
        ]
    raise ValueError(f"no closed-form kernel for m = {m}")


class MixedSpaces:
    """Stress space, potential space and constraint rows for given ``m`` and ``k``.

    Potential dofs are numbered component-major: ``comp * nscalar + node``.
    Constraint rows are the weighted mean of each component followed by one
    row ``(Curl z, Curl beta)`` per kernel generator ``z``.
    """

    def __init__(self, mesh: Triangulation, m: int, k: int):
        if m not in SUPPORTED_M:
            raise ValueError(f"unsupported m = {m}; supported: {SUPPORTED_M}")
        if k < 0:
            raise ValueError("k must be non-negative")
        self.mesh = mesh
        self.m = m
        self.k = k
        self.X = StressSpace(mesh, m, k)
        self.lagrange = LagrangeSpace(mesh, k + 1)
        self.kernel = kernel_basis(m)
        self.yweights = binomial_weights(m - 1)

    @property
    def nscalar(self) -> int:
        return self.lagrange.ndofs

    @property
    def dim_Y(self) -> int:
        return self.m * self.nscalar

    @property
    def nmult(self) -> int:
        return self.m + len(self.kernel)

    @property
    def ndof(self) -> int:
        """Size of the bordered Schur-complement system."""
        return self.dim_Y + self.nmult

    def y_dofs(self) -> np.ndarray:
        """Global potential dofs per element, shape ``(nelem, m * nloc)``."""
        cd = self.lagrange.cell_dofs
        return np.concatenate([c * self.nscalar + cd for c in range(self.m)], axis=1)

    @cached_property
    def constraints(self) -> np.ndarray:
        m = self.m
        lag = self.lagrange
        mesh = self.mesh
        rule = triangle_rule(2 * (self.k + 1))
        val, _ = lag.basis(rule.points)
        wa = rule.weights[None, :] * mesh.areas[:, None]
        n = self.nscalar
        rows = np.zeros((self.nmult, self.dim_Y))
        loc_int = np.einsum("tq,qa->ta", wa, val)
        mean = np.zeros(n)
        np.add.at(mean, lag.cell_dofs.reshape(-1), loc_int.reshape(-1))
        for c in range(m):
            rows[c, c * n : (c + 1) * n] = self.yweights[c] * mean
        if self.kernel:
            grads = lag.grad_basis(rule.points)
            xy = np.einsum("qi,tij->tqj", rule.points, mesh.corners)
            for i, z in enumerate(self.kernel):
                for c in range(m):
                    gx = z[c].diff("x")(xy[..., 0], xy[..., 1])
                    gy = z[c].diff("y")(xy[..., 0], xy[..., 1])
                    loc = np.einsum("tq,tqa->ta", wa, grads[..., 0] * gx[..., None] + grads[..., 1] * gy[..., None])
                    row = np.zeros(n)
                    np.add.at(row, lag.cell_dofs.reshape(-1), loc.reshape(-1))
                    rows[m + i, c * n : (c + 1) * n] = self.yweights[c] * row
        return rows

    def split_Y(self, alpha: np.ndarray) -> np.ndarray:
        """Reshape a potential vector into ``(m, nscalar)``."""
        return np.asarray(alpha).reshape(self.m, self.nscalar)


def build_spaces(mesh: Triangulation, m: int, k: int) -> MixedSpaces:
    return MixedSpaces(mesh, m, k)
