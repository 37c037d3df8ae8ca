import numpy as np
import pytest

from polyharm.assembly import solve_mixed
from polyharm.auxpoisson import build_phi_chain, poisson_solve, recover_primal, stiffness_matrix, sym_grad_values
from polyharm.bench.problems import get_problem
from polyharm.fespace import LagrangeSpace, build_spaces
from polyharm.fields import PiecewiseField, PolyField
from polyharm.mesh import initial_mesh, uniform_red
from polyharm.quadrature import triangle_rule
from polyharm.symtensor import BivariatePoly, binomial_weights, dm_apply

X, Y = BivariatePoly.x(), BivariatePoly.y()
BUBBLE = X * (1 - X) * Y * (1 - Y)


class SinLoad:
    degree = 8

    def __call__(self, mesh, lam):
        xy = np.einsum("qi,tij->tqj", lam, mesh.corners)
        return 2 * np.pi**2 * np.sin(np.pi * xy[..., 0]) * np.sin(np.pi * xy[..., 1])


def h1_error(space, w, exact_grad):
    rule = triangle_rule(2 * space.degree + 6)
    xy = np.einsum("qi,tij->tqj", rule.points, space.mesh.corners)
    d = space.evaluate_grad(w, rule.points) - exact_grad(xy[..., 0], xy[..., 1])
    return np.sqrt(np.einsum("q,t,tqj->", rule.weights, space.mesh.areas, d**2))


def sin_grad(x, y):
    return np.pi * np.stack([np.cos(np.pi * x) * np.sin(np.pi * y), np.sin(np.pi * x) * np.cos(np.pi * y)], axis=-1)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_manufactured_sine_rate(d):
    mesh = uniform_red(initial_mesh("square"))
    errs = []
    for _ in range(3):
        space = LagrangeSpace(mesh, d)
        errs.append(h1_error(space, poisson_solve(space, g=SinLoad()), sin_grad))
        mesh = uniform_red(mesh)
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert rates[-1] == pytest.approx(d, abs=0.15)


def test_zero_load():
    space = LagrangeSpace(uniform_red(initial_mesh("lshape")), 2)
    assert np.all(poisson_solve(space) == 0)


def test_galerkin_residual_and_spd():
    space = LagrangeSpace(uniform_red(initial_mesh("lshape")), 2)
    a = stiffness_matrix(space)
    free = np.setdiff1d(np.arange(space.ndofs), space.boundary_dofs)
    af = a[free][:, free].toarray()
    assert np.abs(af - af.T).max() < 1e-14
    assert np.linalg.eigvalsh(af).min() > 0
    w = poisson_solve(space, g=SinLoad())
    from polyharm.auxpoisson import _load

    b = _load(space, SinLoad())
    assert np.linalg.norm((a @ w - b)[free]) <= 1e-10 * np.linalg.norm(b[free])


def test_divergence_form_load_reproduces_polynomial():
    grad = PolyField([BUBBLE.diff("x"), BUBBLE.diff("y")])
    space = LagrangeSpace(uniform_red(initial_mesh("square")), 4)
    w = poisson_solve(space, G=grad)
    np.testing.assert_allclose(w, space.interpolate(lambda x, y: BUBBLE(x, y)), atol=1e-10)


def test_sym_grad_values_against_operator():
    g = np.random.default_rng(0).standard_normal((5, 3, 2))
    out = sym_grad_values(g)
    assert out.shape == (5, 4)
    # n = 3: out[k] = k/3 dx b[k-1] + (3-k)/3 dy b[k]
    np.testing.assert_allclose(out[:, 0], g[:, 0, 1])
    np.testing.assert_allclose(out[:, 3], g[:, 2, 0])
    np.testing.assert_allclose(out[:, 1], g[:, 0, 0] / 3 + 2 * g[:, 1, 1] / 3)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_chain_zero_data(m):
    phi = build_phi_chain(BivariatePoly(), m, initial_mesh("square"), 2)
    assert isinstance(phi, PiecewiseField)
    assert phi.ncomp == m + 1 and phi.degree == 1
    assert np.all(phi.coeffs == 0)


def _weak_gap(phi, f, m, mesh, v):
    """``|(phi, D^m v) - (f, v)|`` relative to the size of the integrand."""
    rule = triangle_rule(24)
    w = binomial_weights(m)
    dv = PolyField(dm_apply(v, m))(mesh, rule.points)
    prod = np.einsum("tqc,tqc,c->tq", phi(mesh, rule.points), dv, w)
    lhs = np.einsum("q,t,tq->", rule.weights, mesh.areas, prod)
    scale = np.einsum("q,t,tq->", rule.weights, mesh.areas, np.abs(prod))
    rhs = np.einsum("q,t,tq->", rule.weights, mesh.areas, PolyField([f * v])(mesh, rule.points)[..., 0])
    return abs(lhs - rhs) / scale


@pytest.mark.parametrize("pid", ["square-m1", "square-m2", "square-m3"])
def test_chain_weak_identity_improves(pid):
    p = get_problem(pid)
    v = BUBBLE**p.m * (1 + X - Y * Y)
    # the analytic data satisfies (phi, D^m v) = (f, v) in exact arithmetic
    w = [int(c) for c in binomial_weights(p.m)]
    lhs = sum(wc * (a * b).integrate_rect(0, 1, 0, 1) for wc, a, b in zip(w, p.phi, dm_apply(v, p.m)))
    assert lhs == (p.f * v).integrate_rect(0, 1, 0, 1)
    mesh = initial_mesh("square")
    gaps = []
    for _ in range(4):
        mesh = uniform_red(mesh)
        gaps.append(_weak_gap(build_phi_chain(p.f, p.m, mesh, 2), p.f, p.m, mesh, v))
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 0.25 * gaps[0]


def test_chain_gives_zero_oscillation():
    from polyharm.estimator import estimate_mu
    from polyharm.fespace import StressSpace

    p = get_problem("square-m3")
    mesh = uniform_red(initial_mesh("square"))
    phi = build_phi_chain(p.f, 3, mesh, 2)
    assert estimate_mu(phi, StressSpace(mesh, 3, 1)).max() < 1e-20


def _l2(field_vals, mesh, rule):
    return np.sqrt(np.einsum("q,t,tq->", rule.weights, mesh.areas, field_vals**2))


def test_recover_primal_m1_converges():
    p = get_problem("square-m1")
    mesh = initial_mesh("square")
    errs = []
    rule = triangle_rule(8)
    for _ in range(4):
        mesh = uniform_red(mesh)
        s = build_spaces(mesh, 1, 1)
        sol = solve_mixed(s, p.phi_field)
        (u0,) = recover_primal(PiecewiseField(mesh, sol.sigma, 1), 1, mesh, 2)
        exact = PolyField([p.u])(mesh, rule.points)[..., 0]
        errs.append(_l2(u0(mesh, rule.points)[..., 0] - exact, mesh, rule))
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-3


@pytest.mark.parametrize("m", [2, 3])
def test_recover_primal_manufactured(m):
    w = BUBBLE**m
    sigma = PolyField(dm_apply(w, m))
    mesh = uniform_red(uniform_red(initial_mesh("square")))
    stages = recover_primal(sigma, m, mesh, 4)
    assert [s.ncomp for s in stages] == list(range(1, m + 1))
    rule = triangle_rule(12)
    exact = PolyField([w])(mesh, rule.points)[..., 0]
    err = _l2(stages[0](mesh, rule.points)[..., 0] - exact, mesh, rule)
    assert err <= 1e-3 * _l2(exact, mesh, rule)


def test_recover_primal_zero():
    mesh = uniform_red(initial_mesh("lshape"))
    zero = PolyField([BivariatePoly()] * 3)
    for stage in recover_primal(zero, 2, mesh, 2):
        assert np.all(stage.coeffs == 0)
