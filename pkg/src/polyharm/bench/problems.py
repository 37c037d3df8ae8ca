"""Benchmark problems with exact polynomial data."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from ..fields import PolyField
from ..symtensor import BivariatePoly, divm_apply, dm_apply

__all__ = ["BenchmarkProblem", "problem_catalog", "get_problem", "PROBLEM_IDS"]


@dataclass(frozen=True)
class BenchmarkProblem:
    id: str
    m: int
    domain: str
    f: BivariatePoly
    phi: tuple  # reduced components of the analytic data
    u: Optional[BivariatePoly] = None

    @property
    def phi_field(self) -> PolyField:
        return PolyField(self.phi)

    @property
    def sigma_exact(self) -> Optional[PolyField]:
        return None if self.u is None else PolyField(dm_apply(self.u, self.m))

    def identity_defect(self) -> BivariatePoly:
        """``(-1)^m div^m phi - f`` as an exact polynomial."""
        return (-1) ** self.m * divm_apply(list(self.phi)) - self.f


X, Y = BivariatePoly.x(), BivariatePoly.y()
ZERO = BivariatePoly()


def _triple(f: BivariatePoly, var: str, times: int) -> BivariatePoly:
    for _ in range(times):
        f = f.antiderivative(var)
    return f


def _square_m1() -> BenchmarkProblem:
    u = X * (1 - X) * Y * (1 - Y)
    f = -u.laplacian()
    half = Fraction(-1, 2)
    # reduced order: entry k has k ones, so entry 1 is the x-direction
    phi = (half * f.antiderivative("y"), half * f.antiderivative("x"))
    return BenchmarkProblem("square-m1", 1, "square", f, phi, u)


def _square_m2() -> BenchmarkProblem:
    u = (X * (1 - X) * Y * (1 - Y)) ** 2

    def part(s: BivariatePoly, t: BivariatePoly) -> BivariatePoly:
        return 24 * (s**4 / 12 - s**5 / 10 + s**6 / 30) + (s**2 - 2 * s**3 + s**4) * (2 - 12 * t + 12 * t**2)

    phi11 = part(X, Y)
    phi22 = part(Y, X)
    f = 24 * (X**2 - 2 * X**3 + X**4 + Y**2 - 2 * Y**3 + Y**4) + 2 * (2 - 12 * X + 12 * X**2) * (
        2 - 12 * Y + 12 * Y**2
    )
    return BenchmarkProblem("square-m2", 2, "square", f, (phi22, ZERO, phi11), u)


def _lshape_m2() -> BenchmarkProblem:
    q = Fraction(1, 4)
    return BenchmarkProblem("lshape-m2", 2, "lshape", BivariatePoly.const(1), (q * Y**2, ZERO, q * X**2))


def _square_m3() -> BenchmarkProblem:
    u = (X * (1 - X) * Y * (1 - Y)) ** 3
    f = -u.laplacian().laplacian().laplacian()
    half = Fraction(-1, 2)
    phi111 = half * _triple(f, "x", 3)
    phi222 = half * _triple(f, "y", 3)
    return BenchmarkProblem("square-m3", 3, "square", f, (phi222, ZERO, ZERO, phi111), u)


def _lshape_m3() -> BenchmarkProblem:
    c = Fraction(-1, 12)
    return BenchmarkProblem("lshape-m3", 3, "lshape", BivariatePoly.const(1), (c * Y**3, ZERO, ZERO, c * X**3))


def _checked(p: BenchmarkProblem) -> BenchmarkProblem:
    if not p.identity_defect().is_zero():
        raise AssertionError(f"data identity fails for {p.id}")
    if p.u is not None:
        lap = p.u
        for _ in range(p.m):
            lap = lap.laplacian()
        if not ((-1) ** p.m * lap - p.f).is_zero():
            raise AssertionError(f"right-hand side of {p.id} does not match the exact solution")
    return p


_BUILDERS = {
    "square-m1": _square_m1,
    "square-m2": _square_m2,
    "lshape-m2": _lshape_m2,
    "square-m3": _square_m3,
    "lshape-m3": _lshape_m3,
}
PROBLEM_IDS = tuple(_BUILDERS)
_CACHE: dict = {}


def get_problem(pid: str) -> BenchmarkProblem:
    if pid not in _BUILDERS:
        raise KeyError(f"unknown problem {pid!r}; choose from {', '.join(PROBLEM_IDS)}")
    if pid not in _CACHE:
        _CACHE[pid] = _checked(_BUILDERS[pid]())
    return _CACHE[pid]


def problem_catalog() -> list:
    """All benchmark problems; each data identity is verified on construction."""
    return [get_problem(p) for p in PROBLEM_IDS]
