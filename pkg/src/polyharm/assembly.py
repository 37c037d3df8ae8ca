"""Assembly and solution of the discrete mixed problem.

Unknowns are the stress ``sigma_h`` in the discontinuous space X_h and the
potential ``alpha_h`` in the constrained continuous space Y_h::

    (sigma_h, tau) + (tau, symCurl alpha_h) = (sym phi, tau)   for tau in X_h
    (sigma_h, symCurl beta)                 = 0                for beta in Y_h

Since M is block diagonal, sigma_h is eliminated element by element and the
remaining system is ``S = B^T M^-1 B`` bordered by the constraint rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fespace import MixedSpaces
from .quadrature import triangle_rule
from .sparsesolve import SingularMatrixError, as_csr, factor_solve

__all__ = [
    "ConfigurationError",
    "DEFAULT_DATA_DEGREE",
    "assemble_mass",
    "assemble_coupling",
    "assemble_load",
    "SchurSystem",
    "MixedSolution",
    "solve_mixed",
    "sym_curl_coeffs",
]

DEFAULT_DATA_DEGREE = 12
CHUNK = 20000


class ConfigurationError(ValueError):
    pass


def _check_mesh(spaces: MixedSpaces):
    if np.any(spaces.mesh.areas <= 0):
        raise ValueError("degenerate or clockwise triangle in mesh")


def assemble_mass(spaces: MixedSpaces) -> sp.csr_matrix:
    """Block-diagonal weighted mass matrix of X_h."""
    _check_mesh(spaces)
    X = spaces.X
    nt, nc, nk = spaces.mesh.nelem, X.ncomp, X.nk
    blocks = X.local_mass[:, None, :, :] * X.weights[None, :, None, None]
    idx = np.arange(nt * nc * nk).reshape(nt, nc, nk)
    rows = np.broadcast_to(idx[..., :, None], (nt, nc, nk, nk))
    cols = np.broadcast_to(idx[..., None, :], (nt, nc, nk, nk))
    return sp.csr_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())), shape=(X.dim, X.dim))


def _local_coupling(spaces: MixedSpaces, elems: np.ndarray) -> np.ndarray:
    """Local blocks ``(n, (m+1) nk, m nloc)`` of B (binomial weights included)."""
    m, k = spaces.m, spaces.k
    X, lag = spaces.X, spaces.lagrange
    rule = triangle_rule(2 * k)
    xy = np.einsum("qi,tij->tqj", rule.points, spaces.mesh.corners[elems])
    phi = X.basis_at(xy, elems[:, None])  # (n, q, nk)
    grads = lag.grad_basis(rule.points, elems)  # (n, q, nloc, 2)
    wa = rule.weights[None, :] * spaces.mesh.areas[elems][:, None]
    # G[t, p, a, j] = int phi_p d_j N_a
    G = np.einsum("tq,tqp,tqaj->tpaj", wa, phi, grads)
    n, nloc = len(elems), lag.nloc
    out = np.zeros((n, m + 1, X.nk, m, nloc))
    w = X.weights
    for c in range(m + 1):
        if c < m:
            out[:, c, :, c, :] += w[c] * (m - c) / m * G[..., 0]
        if c > 0:
            out[:, c, :, c - 1, :] -= w[c] * c / m * G[..., 1]
    return out.reshape(n, (m + 1) * X.nk, m * nloc)


def _chunks(n: int):
    for s in range(0, n, CHUNK):
        yield np.arange(s, min(n, s + CHUNK))


def assemble_coupling(spaces: MixedSpaces) -> sp.csr_matrix:
    """Global B with ``B[i, j] = (tau_i, symCurl beta_j)``."""
    _check_mesh(spaces)
    X = spaces.X
    ydofs = spaces.y_dofs()
    nloc_x = X.ncomp * X.nk
    rows, cols, vals = [], [], []
    for elems in _chunks(spaces.mesh.nelem):
        blk = _local_coupling(spaces, elems)
        xi = (elems[:, None] * nloc_x + np.arange(nloc_x)[None, :])
        rows.append(np.broadcast_to(xi[:, :, None], blk.shape).ravel())
        cols.append(np.broadcast_to(ydofs[elems][:, None, :], blk.shape).ravel())
        vals.append(blk.ravel())
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(X.dim, spaces.dim_Y),
    )


def assemble_load(field, spaces: MixedSpaces, max_data_degree: int = DEFAULT_DATA_DEGREE) -> np.ndarray:
    """Local load ``F[t, c, p] = C(m,c) (sym phi_c, phi_p)_T`` as ``(nelem, m+1, nk)``."""
    if field is None:
        return spaces.X.zeros()
    deg = int(getattr(field, "degree", max_data_degree))
    if deg > max_data_degree:
        raise ConfigurationError(
            f"data degree {deg} exceeds the configured quadrature bound {max_data_degree}"
        )
    if getattr(field, "ncomp", spaces.m + 1) != spaces.m + 1:
        raise ConfigurationError("data field has the wrong number of tensor components")
    X = spaces.X
    rule = triangle_rule(X.k + deg)
    vals = field(spaces.mesh, rule.points)
    xy = np.einsum("qi,tij->tqj", rule.points, spaces.mesh.corners)
    phi = X.basis_at(xy, np.arange(spaces.mesh.nelem)[:, None])
    wa = rule.weights[None, :] * spaces.mesh.areas[:, None]
    return np.einsum("tq,tqp,tqc->tcp", wa, phi, vals) * X.weights[None, :, None]


def sym_curl_coeffs(spaces: MixedSpaces, alpha: np.ndarray) -> np.ndarray:
    """X_h coefficients of ``symCurl alpha`` (exact since it lies in X_h)."""
    X = spaces.X
    ydofs = spaces.y_dofs()
    out = np.empty((spaces.mesh.nelem, X.ncomp, X.nk))
    for elems in _chunks(spaces.mesh.nelem):
        blk = _local_coupling(spaces, elems)
        b = np.einsum("tij,tj->ti", blk, alpha[ydofs[elems]]).reshape(len(elems), X.ncomp, X.nk)
        out[elems] = np.einsum("tab,tcb->tca", X.local_mass_inv[elems], b) / X.weights[None, :, None]
    return out


def _apply_minv(spaces: MixedSpaces, local: np.ndarray) -> np.ndarray:
    X = spaces.X
    return np.einsum("tab,tcb->tca", X.local_mass_inv, local) / X.weights[None, :, None]


class SchurSystem:
    """``S = B^T M^-1 B`` with constraint rows ``C`` and right-hand side ``g``.

    ``S`` is assembled from local blocks. ``matvec`` applies it without
    forming the global matrix.
    """

    def __init__(self, spaces: MixedSpaces, load: np.ndarray):
        _check_mesh(spaces)
        self.spaces = spaces
        self.load = np.asarray(load, dtype=float)
        self._assemble()

    def _assemble(self):
        sp_ = self.spaces
        X = sp_.X
        ydofs = sp_.y_dofs()
        nt = sp_.mesh.nelem
        nloc_x = X.ncomp * X.nk
        rows, cols, vals = [], [], []
        g = np.zeros(sp_.dim_Y)
        for elems in _chunks(nt):
            blk = _local_coupling(sp_, elems)  # (n, nx, ny)
            minv = np.zeros((len(elems), nloc_x, nloc_x))
            for c in range(X.ncomp):
                s = slice(c * X.nk, (c + 1) * X.nk)
                minv[:, s, s] = X.local_mass_inv[elems] / X.weights[c]
            mb = np.einsum("tij,tjk->tik", minv, blk)
            sloc = np.einsum("tij,tik->tjk", blk, mb)
            sloc = 0.5 * (sloc + sloc.transpose(0, 2, 1))
            yd = ydofs[elems]
            rows.append(np.broadcast_to(yd[:, :, None], sloc.shape).ravel())
            cols.append(np.broadcast_to(yd[:, None, :], sloc.shape).ravel())
            vals.append(sloc.ravel())
            fl = self.load[elems].reshape(len(elems), nloc_x)
            gl = np.einsum("tij,ti->tj", mb, fl)
            np.add.at(g, yd.ravel(), gl.ravel())
        self.S = as_csr(
            sp.coo_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(sp_.dim_Y, sp_.dim_Y),
            ),
            symmetric=True,
        )
        self.g = g
        self.C = sp_.constraints

    @property
    def ndof(self) -> int:
        return self.spaces.ndof

    def matvec(self, alpha: np.ndarray) -> np.ndarray:
        """Matrix-free ``B^T M^-1 B alpha`` from element blocks."""
        sp_ = self.spaces
        X = sp_.X
        ydofs = sp_.y_dofs()
        out = np.zeros(sp_.dim_Y)
        for elems in _chunks(sp_.mesh.nelem):
            blk = _local_coupling(sp_, elems)
            b = np.einsum("tij,tj->ti", blk, alpha[ydofs[elems]])
            b = b.reshape(len(elems), X.ncomp, X.nk)
            mb = np.einsum("tab,tcb->tca", X.local_mass_inv[elems], b) / X.weights[None, :, None]
            y = np.einsum("tij,ti->tj", blk, mb.reshape(len(elems), -1))
            np.add.at(out, ydofs[elems].ravel(), y.ravel())
        return out

    def as_operator(self) -> spla.LinearOperator:
        n = self.spaces.dim_Y
        return spla.LinearOperator((n, n), matvec=self.matvec, dtype=float)

    def bordered(self) -> sp.csr_matrix:
        C = sp.csr_matrix(self.C)
        return sp.bmat([[self.S, C.T], [C, None]], format="csc")


@dataclass
class MixedSolution:
    spaces: MixedSpaces
    sigma: np.ndarray  # (nelem, m+1, nk)
    alpha: np.ndarray  # (dim_Y,)
    multipliers: np.ndarray
    load: np.ndarray  # local load vectors, (nelem, m+1, nk)
    system: SchurSystem

    @cached_property
    def projected_data(self) -> np.ndarray:
        """Coefficients of ``Pi_k sym phi``."""
        return _apply_minv(self.spaces, self.load)

    @cached_property
    def curl_alpha(self) -> np.ndarray:
        return sym_curl_coeffs(self.spaces, self.alpha)

    def reconstruction_defect(self) -> float:
        """Relative ``||sigma + symCurl alpha - Pi_k sym phi||``."""
        X = self.spaces.X
        ref = X.norm(self.projected_data)
        d = X.norm(self.sigma + self.curl_alpha - self.projected_data)
        return d / ref if ref > 0 else d

    def orthogonality_defect(self) -> float:
        """Largest relative ``(sigma, symCurl beta_j)`` over basis directions in ker C."""
        return orthogonality_defect(self.spaces, self.sigma, self.system, self.spaces.X.norm(self.projected_data))


def orthogonality_defect(spaces: MixedSpaces, sigma: np.ndarray, system: SchurSystem, reference: float = 0.0) -> float:
    """``max_j |(P r)_j| / (s ||symCurl beta_j||)`` with ``r = B^T sigma``.

    ``P`` removes the part of ``r`` in the range of ``C^T``: a vanishing result
    means ``sigma`` is orthogonal to ``symCurl beta`` for every admissible
    ``beta`` (those satisfying the side constraints).  The scale is
    ``s = max(||sigma||, reference)``; pass the norm of the projected data so
    that a stress which vanishes exactly does not turn round-off into O(1).
    """
    X = spaces.X
    ydofs = spaces.y_dofs()
    # B[i, j] already holds (phi_i, symCurl beta_j), so r = B^T sigma
    r = np.zeros(spaces.dim_Y)
    for elems in _chunks(spaces.mesh.nelem):
        blk = _local_coupling(spaces, elems)
        local = sigma[elems].reshape(len(elems), -1)
        np.add.at(r, ydofs[elems].ravel(), np.einsum("tij,ti->tj", blk, local).ravel())
    C = system.C
    lam = np.linalg.lstsq(C.T, r, rcond=None)[0]
    r = r - C.T @ lam
    scale = np.sqrt(np.maximum(system.S.diagonal(), 0.0)) * max(X.norm(sigma), reference)
    ok = scale > 0
    if not ok.any():
        return 0.0
    return float(np.max(np.abs(r[ok]) / scale[ok]))


def solve_mixed(spaces: MixedSpaces, field, max_data_degree: int = DEFAULT_DATA_DEGREE) -> MixedSolution:
    """Assemble and solve the discrete mixed problem for data ``field``."""
    load = assemble_load(field, spaces, max_data_degree)
    system = SchurSystem(spaces, load)
    K = system.bordered()
    rhs = np.concatenate([system.g, np.zeros(spaces.nmult)])
    try:
        sol = factor_solve(K, rhs)
    except SingularMatrixError as exc:
        rank = np.linalg.matrix_rank(system.C)
        raise SingularMatrixError(
            f"bordered system is singular: {exc}; constraint rank {rank} of {spaces.nmult} rows, "
            f"min diag(S) = {system.S.diagonal().min():.3e}"
        ) from exc
    alpha = sol[: spaces.dim_Y]
    mult = sol[spaces.dim_Y :]
    # sigma = M^-1 (F - B alpha)
    X = spaces.X
    ydofs = spaces.y_dofs()
    sigma = np.empty_like(load)
    for elems in _chunks(spaces.mesh.nelem):
        blk = _local_coupling(spaces, elems)
        ba = np.einsum("tij,tj->ti", blk, alpha[ydofs[elems]]).reshape(len(elems), X.ncomp, X.nk)
        sigma[elems] = np.einsum("tab,tcb->tca", X.local_mass_inv[elems], load[elems] - ba) / X.weights[None, :, None]
    return MixedSolution(spaces, sigma, alpha, mult, load, system)
