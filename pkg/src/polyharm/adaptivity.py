"""Adaptive loop with separate marking.

Each level solves, estimates λ and μ, and then either applies Dörfler
marking to λ (when ``μ² <= κ λ²``) or builds a mesh that resolves the data
to tolerance ``ρ μ²`` and overlays it with the current mesh.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .assembly import MixedSolution, solve_mixed
from .estimator import IndicatorField, estimate_lambda, estimate_mu, sigma_error
from .fespace import MixedSpaces, StressSpace, build_spaces
from .mesh import Triangulation, overlay, refine_nvb, uniform_red

__all__ = [
    "AfemConfig",
    "AfemState",
    "AfemError",
    "AfemResult",
    "HISTORY_FIELDS",
    "doerfler_mark",
    "select_branch",
    "data_mark",
    "resolve_data",
    "afem_loop",
]

HISTORY_FIELDS = ("level", "nvert", "nelem", "ndof", "err_sigma", "lambda", "mu", "branch", "seconds")


class AfemError(RuntimeError):
    """Raised when a level fails; ``history`` holds the rows completed so far."""

    def __init__(self, message: str, history):
        super().__init__(message)
        self.history = list(history)


@dataclass(frozen=True)
class AfemConfig:
    theta: float = 0.1
    kappa: float = 0.5
    rho: float = 0.75
    max_levels: int = 10
    max_ndof: int = 200_000
    mode: str = "adaptive"
    max_data_iterations: int = 60

    def __post_init__(self):
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if self.mode not in ("uniform", "adaptive"):
            raise ValueError("mode must be 'uniform' or 'adaptive'")
        if self.max_levels < 1 or self.max_ndof < 1:
            raise ValueError("max_levels and max_ndof must be positive")


@dataclass
class AfemState:
    level: int
    mesh: Triangulation
    spaces: MixedSpaces
    solution: MixedSolution
    data: object
    indicators: IndicatorField
    branch: str
    history: list = field(default_factory=list)


@dataclass
class AfemResult:
    history: list
    state: AfemState


def select_branch(indicators: IndicatorField, kappa: float) -> str:
    """``"doerfler"`` when ``mu^2 <= kappa lambda^2`` (inclusive), else ``"data"``."""
    return "doerfler" if indicators.mu2_total <= kappa * indicators.lambda2_total else "data"


def doerfler_mark(indicators, theta: float) -> np.ndarray:
    """Minimal set whose indicator sum reaches ``theta`` times the total.

    Elements are taken in descending order, ties by ascending id.
    """
    eta = np.asarray(indicators, dtype=float)
    if np.any(eta < 0):
        raise ValueError("indicators must be non-negative")
    if eta.size == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((np.arange(eta.size), -eta))
    csum = np.cumsum(eta[order])
    total = csum[-1]
    if total <= 0:
        return np.zeros(0, dtype=np.int64)
    n = int(np.searchsorted(csum, theta * total, side="left")) + 1
    return np.sort(order[: min(n, eta.size)])


def resolve_data(data, mesh: Triangulation, m: int, k: int, rho: float, max_iterations: int = 60) -> Triangulation:
    """Refinement of ``mesh.coarse`` with ``mu^2 <= rho mu^2(mesh)``.

    Elements whose μ² reaches a threshold are bisected; the threshold halves
    after every pass.
    """
    target = rho * estimate_mu(data, StressSpace(mesh, m, k)).sum()
    cand = mesh.coarse
    mu2 = estimate_mu(data, StressSpace(cand, m, k))
    thr = mu2.max() / 2 if mu2.size else 0.0
    for _ in range(max_iterations):
        if mu2.sum() <= target:
            return cand
        marks = np.flatnonzero(mu2 >= thr)
        if marks.size:
            cand = refine_nvb(cand, marks)
            mu2 = estimate_mu(data, StressSpace(cand, m, k))
        thr /= 2
    raise AfemError(f"data approximation did not reach rho * mu^2 within {max_iterations} passes", [])


def data_mark(data, mesh: Triangulation, m: int, k: int, rho: float, max_iterations: int = 60) -> Triangulation:
    """Overlay of ``mesh`` with the data mesh from :func:`resolve_data`."""
    return overlay(mesh, resolve_data(data, mesh, m, k, rho, max_iterations))


def afem_loop(
    m: int,
    k: int,
    mesh: Triangulation,
    data_for_mesh: Callable[[Triangulation], object],
    config: AfemConfig,
    sigma_exact=None,
    timing: bool = True,
    on_level: Optional[Callable[[AfemState], None]] = None,
) -> AfemResult:
    """Solve, estimate, mark and refine until a level or ndof limit is hit.

    ``data_for_mesh(mesh)`` returns the right-hand side tensor field used on
    that mesh (analytic data may ignore the argument).
    """
    history: list = []
    state = None
    level = 0
    try:
        spaces = build_spaces(mesh, m, k)
        while True:
            t0 = time.perf_counter()
            data = data_for_mesh(mesh)
            sol = solve_mixed(spaces, data)
            lam2 = estimate_lambda(spaces.X, sol.sigma)
            mu2 = estimate_mu(data, spaces.X, sol.projected_data)
            ind = IndicatorField(lam2, mu2)
            branch = "uniform" if config.mode == "uniform" else select_branch(ind, config.kappa)
            err = sigma_error(spaces.X, sol.sigma, sigma_exact) if sigma_exact is not None else float("nan")
            state = AfemState(level, mesh, spaces, sol, data, ind, branch, history)
            if on_level is not None:
                on_level(state)
            row = {
                "level": level,
                "nvert": mesh.nvert,
                "nelem": mesh.nelem,
                "ndof": spaces.ndof,
                "err_sigma": err,
                "lambda": float(np.sqrt(ind.lambda2_total)),
                "mu": float(np.sqrt(ind.mu2_total)),
                "branch": branch,
                "seconds": time.perf_counter() - t0 if timing else 0.0,
            }
            history.append(row)
            if level + 1 >= config.max_levels:
                break
            if branch == "uniform":
                new_mesh = uniform_red(mesh)
            elif branch == "doerfler":
                marks = doerfler_mark(lam2, config.theta)
                if marks.size == 0:
                    break
                new_mesh = refine_nvb(mesh, marks)
            else:
                new_mesh = data_mark(data, mesh, m, k, config.rho, config.max_data_iterations)
            new_spaces = build_spaces(new_mesh, m, k)
            if new_spaces.ndof > config.max_ndof:
                break
            mesh, spaces = new_mesh, new_spaces
            level += 1
    except AfemError as exc:
        raise AfemError(str(exc), history) from exc
    except Exception as exc:
        raise AfemError(f"level {level} failed: {exc}", history) from exc
    return AfemResult(history, state)
