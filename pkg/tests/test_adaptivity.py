import itertools

import numpy as np
import pytest

from polyharm.adaptivity import (
    AfemConfig,
    AfemError,
    afem_loop,
    data_mark,
    doerfler_mark,
    resolve_data,
    select_branch,
)
from polyharm.bench.problems import get_problem
from polyharm.estimator import IndicatorField, estimate_mu
from polyharm.fespace import StressSpace
from polyharm.fields import PiecewiseField
from polyharm.mesh import initial_mesh, overlay, uniform_red


def test_doerfler_examples():
    assert doerfler_mark([4, 1, 1, 1, 1], 0.5).tolist() == [0]
    assert doerfler_mark([0, 3, 0, 2], 1.0).tolist() == [1, 3]
    assert doerfler_mark([0, 0, 0], 0.5).size == 0
    assert doerfler_mark([], 0.5).size == 0
    # ties go to the smaller id
    assert doerfler_mark([1, 1, 1, 1], 0.5).tolist() == [0, 1]
    with pytest.raises(ValueError):
        doerfler_mark([1, -1], 0.5)


def test_doerfler_minimal_against_exhaustive_search():
    rng = np.random.default_rng(0)
    for _ in range(60):
        n = int(rng.integers(1, 13))
        eta = rng.exponential(size=n)
        if rng.random() < 0.3:
            eta = np.round(eta, 1)
        theta = float(rng.uniform(0.05, 1.0))
        marks = doerfler_mark(eta, theta)
        assert eta[marks].sum() >= theta * eta.sum() - 1e-12
        best = next(
            size
            for size in range(n + 1)
            if any(eta[list(c)].sum() >= theta * eta.sum() - 1e-12 for c in itertools.combinations(range(n), size))
        )
        assert len(marks) == best


def test_branch_predicate_is_inclusive():
    ind = IndicatorField(np.array([1.0, 1.0]), np.array([0.5, 0.5]))
    assert select_branch(ind, 0.5) == "doerfler"
    assert select_branch(ind, 0.49) == "data"
    zero_mu = IndicatorField(np.array([0.0]), np.array([0.0]))
    assert select_branch(zero_mu, 1e-9) == "doerfler"


@pytest.mark.parametrize(
    "kwargs",
    [dict(theta=0.0), dict(theta=1.5), dict(kappa=0.0), dict(rho=1.0), dict(rho=0.0), dict(mode="other"), dict(max_levels=0)],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        AfemConfig(**kwargs)
    AfemConfig(theta=1.0)


def test_data_mark_concentrated_data():
    t0 = initial_mesh("square")
    mesh = uniform_red(t0)
    coeffs = np.zeros((t0.nelem, 3, 6))
    coeffs[0, 0, 3] = 1.0  # a quadratic on one root triangle only
    data = PiecewiseField(t0, coeffs, 2)
    total = estimate_mu(data, StressSpace(mesh, 2, 0)).sum()
    cand = resolve_data(data, mesh, 2, 0, 0.75)
    assert estimate_mu(data, StressSpace(cand, 2, 0)).sum() <= 0.75 * total
    # closure may touch neighbours, but the deepest refinement sits in root 0
    assert cand.depth[cand.roots == 0].max() > cand.depth[cand.roots != 0].max()
    fine = data_mark(data, mesh, 2, 0, 0.75)
    assert estimate_mu(data, StressSpace(fine, 2, 0)).sum() <= 0.75 * total
    assert fine.nelem <= mesh.nelem + cand.nelem - t0.nelem
    assert fine.depth[fine.roots == 0].max() > fine.depth[fine.roots != 0].max()


def test_data_mark_iteration_guard():
    p = get_problem("lshape-m2")
    mesh = uniform_red(initial_mesh("lshape"))
    with pytest.raises(AfemError):
        data_mark(p.phi_field, mesh, 2, 0, 0.5, max_iterations=1)


def _run(pid, k, mode="adaptive", start=None, **kw):
    p = get_problem(pid)
    levels = []
    config = AfemConfig(mode=mode, **kw)
    mesh = initial_mesh(p.domain) if start is None else start
    res = afem_loop(p.m, k, mesh, lambda mesh: p.phi_field, config, p.sigma_exact,
                    on_level=lambda s: levels.append(s))
    return res, levels


def _data_levels(res):
    return [r["level"] for r in res.history if r["branch"] == "data"]


def test_uniform_mode_uses_red_refinement():
    res, levels = _run("square-m2", 0, mode="uniform", max_levels=3)
    assert [r["branch"] for r in res.history] == ["uniform"] * 3
    assert [s.mesh.nelem for s in levels] == [4, 16, 64]


PARAMS = dict(theta=0.1, kappa=0.5, rho=0.75, max_levels=60, max_ndof=3000)


@pytest.mark.parametrize("k", [1, 2])
def test_square_m2_adaptive_all_doerfler(k):
    res, _ = _run("square-m2", k, **PARAMS)
    assert len(res.history) >= 20
    assert _data_levels(res) == []


def test_square_m2_k0_initial_mesh_dependence():
    # the four-triangle start under-resolves the degree-6 data once
    res, _ = _run("square-m2", 0, **PARAMS)
    assert _data_levels(res) == [0]
    res, _ = _run("square-m2", 0, start=uniform_red(initial_mesh("square")), **PARAMS)
    assert _data_levels(res) == []


def test_lshape_m2_data_branch_only_first_two_levels():
    res, levels = _run("lshape-m2", 0, **dict(PARAMS, max_ndof=5000))
    assert _data_levels(res) == [0, 1]
    ndof = [r["ndof"] for r in res.history]
    assert all(b > a for a, b in zip(ndof, ndof[1:]))
    # overlay bound on the data levels
    for state, nxt in zip(levels, levels[1:]):
        if state.branch == "data":
            cand = resolve_data(state.data, state.mesh, 2, 0, 0.75)
            assert nxt.mesh.nelem == overlay(state.mesh, cand).nelem
            assert nxt.mesh.nelem <= state.mesh.nelem + cand.nelem - state.mesh.coarse.nelem


def test_history_rows_and_limits():
    res, _ = _run("square-m2", 1, mode="uniform", max_levels=10, max_ndof=800)
    assert all(r["ndof"] <= 800 for r in res.history)
    assert [r["level"] for r in res.history] == list(range(len(res.history)))
    for r in res.history:
        assert r["lambda"] > 0 and r["err_sigma"] > 0 and r["mu"] >= 0


def test_partial_history_on_failure():
    p = get_problem("square-m2")
    calls = []

    def data(mesh):
        calls.append(mesh.nelem)
        if len(calls) == 3:
            raise RuntimeError("boom")
        return p.phi_field

    with pytest.raises(AfemError) as info:
        afem_loop(2, 0, initial_mesh("square"), data, AfemConfig(mode="uniform", max_levels=5))
    assert len(info.value.history) == 2
    assert "boom" in str(info.value)
