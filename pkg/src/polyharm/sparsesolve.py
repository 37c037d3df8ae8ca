"""Thin layer over ``scipy.sparse``: CSR normalization, direct solves and CG."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularMatrixError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, history):
        super().__init__(message)
        self.history = list(history)


def as_csr(a, symmetric: bool = False, rtol: float = 1e-12) -> sp.csr_matrix:
    """Canonical CSR copy (sorted, duplicates summed); optionally assert symmetry."""
    a = sp.csr_matrix(a, dtype=float, copy=True)
    a.sum_duplicates()
    a.sort_indices()
    if symmetric:
        if a.shape[0] != a.shape[1]:
            raise ValueError("symmetric matrix must be square")
        scale = abs(a).max() if a.nnz else 0.0
        asym = abs(a - a.T).max() if a.nnz else 0.0
        if asym > rtol * max(scale, 1e-300):
            raise ValueError(f"matrix is not symmetric (max |A - A^T| = {asym:.3e})")
    return a


def factor_solve(a, b: np.ndarray, check: bool = True) -> np.ndarray:
    """Sparse LU solve of a nonsingular (possibly indefinite) system."""
    a = sp.csc_matrix(a, dtype=float)
    b = np.asarray(b, dtype=float)
    try:
        lu = spla.splu(a)
    except RuntimeError as exc:
        raise SingularMatrixError(str(exc)) from exc
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("non-finite solution from LU factorization")
    if check:
        res = np.linalg.norm(a @ x - b)
        anorm = spla.norm(a, np.inf)
        bound = 1e-10 * (anorm * np.linalg.norm(x) + np.linalg.norm(b))
        if res > bound and res > 0:
            raise SingularMatrixError(f"residual {res:.3e} exceeds {bound:.3e}; matrix is numerically singular")
    return x


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    history: list = field(default_factory=list)


def cg_solve(a, b: np.ndarray, tol: float = 1e-12, maxit: int | None = None, x0=None, jacobi: bool = True) -> CGResult:
    """Preconditioned CG; raises ``ConvergenceError`` with the residual history."""
    b = np.asarray(b, dtype=float)
    n = len(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0, [0.0])
    precond = None
    if jacobi and sp.issparse(a):
        d = a.diagonal()
        if np.all(d > 0):
            precond = sp.diags(1.0 / d)
    history = []

    def record(xk):
        history.append(float(np.linalg.norm(b - a @ xk)) / bnorm)

    maxit = maxit if maxit is not None else max(10 * n, 100)
    x, info = spla.cg(a, b, x0=x0, rtol=tol, atol=0.0, maxiter=maxit, M=precond, callback=record)
    rel = float(np.linalg.norm(b - a @ x)) / bnorm
    if info != 0 or rel > 10 * tol:
        raise ConvergenceError(f"CG stopped with relative residual {rel:.3e} (info={info})", history)
    return CGResult(x, len(history), history)
