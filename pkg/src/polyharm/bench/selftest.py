"""Quick oracle checks behind ``polyharm selftest``."""

from __future__ import annotations

import itertools

import numpy as np

from ..assembly import solve_mixed
from ..fespace import build_spaces, kernel_basis
from ..mesh import check_conforming, initial_mesh, refine_nvb, uniform_red
from ..symtensor import SymTensor, sym_curl_matrix, sym_inner
from .problems import problem_catalog


def _tensor_oracle(rng) -> bool:
    for _ in range(200):
        order = int(rng.integers(0, 5))
        a = SymTensor(order, tuple(rng.standard_normal(order + 1)))
        b = SymTensor(order, tuple(rng.standard_normal(order + 1)))
        brute = float(np.sum(a.expand() * b.expand()))
        if abs(sym_inner(a, b) - brute) > 1e-13 * max(1.0, abs(brute)):
            return False
    return True


def _kernels() -> bool:
    return all(
        all(c.is_zero() for c in sym_curl_matrix(m).apply(z))
        for m in (2, 3)
        for z in kernel_basis(m)
    )


def _mesh(rng) -> bool:
    mesh = initial_mesh("lshape")
    for _ in range(6):
        mesh = refine_nvb(mesh, rng.choice(mesh.nelem, size=max(1, mesh.nelem // 5), replace=False))
    return check_conforming(mesh) and abs(mesh.total_area() - 3.0) < 1e-12


def _solver() -> bool:
    for p in problem_catalog():
        mesh = uniform_red(initial_mesh(p.domain))
        sol = solve_mixed(build_spaces(mesh, p.m, 1), p.phi_field)
        if sol.reconstruction_defect() > 1e-9 or sol.orthogonality_defect() > 1e-9:
            return False
    return True


def run_selftest() -> int:
    rng = np.random.default_rng(20240101)
    checks = [
        ("reduced tensor inner product vs full expansion", lambda: _tensor_oracle(rng)),
        ("kernel generators annihilated by sym Curl", _kernels),
        ("catalog data identities", lambda: len(problem_catalog()) > 0),
        ("random NVB refinements stay conforming", lambda: _mesh(rng)),
        ("discrete orthogonality and reconstruction", _solver),
    ]
    ok = True
    for name, fn in checks:
        try:
            passed = bool(fn())
        except Exception as exc:  # a crash counts as a failure
            passed = False
            name = f"{name} ({exc})"
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}")
    return 0 if ok else 1
