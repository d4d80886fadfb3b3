import math

import numpy as np
import pytest

from gradgraph2d import GeneralCoeffs, f_tau, ma_radial_exact, radial_ode_solution, three_term_radial
from gradgraph2d.exceptions import ConvexityMargin
from gradgraph2d.legendre import MapKind, legendre_dual, rotate_large_tau, three_term_reduce
from gradgraph2d.operators import eigen_sym2, tau_params

rng = np.random.default_rng(3)


def annulus(n, lo, hi):
    r = np.exp(rng.uniform(math.log(lo), math.log(hi), n))
    t = rng.uniform(0, 2 * math.pi, n)
    return np.stack([r * np.cos(t), r * np.sin(t)], -1)


def ode(tau, p0=1.3, rmax=1e3):
    return radial_ode_solution(tau, float(f_tau(tau, 1.0, 1.0)), 1.0, p0, rmax)


@pytest.mark.parametrize("tau", [math.pi / 12, math.pi / 6, math.pi / 5])
def test_dual_is_monge_ampere(tau):
    sol = ode(tau)
    pair = legendre_dual(sol, tau)
    p = tau_params(tau)
    assert pair.map_kind is MapKind.LEGENDRE_SMALL_TAU
    assert pair.dual_constant == pytest.approx(2 * p.b * sol.C0 * p.sin)
    Y = annulus(50, pair.dual.r_min * 1.01, pair.dual.r_max * 0.99)
    l1, l2, _ = eigen_sym2(pair.dual.hessian(Y))
    assert np.max(np.abs(np.log(l1 * l2) - pair.dual_constant)) < 1e-8
    assert np.max(np.abs(pair.dual.residual(Y))) < 1e-8


def test_dual_value_is_the_legendre_transform():
    # v(x~) = x.x~ - u_bar(x) at x~ = D u_bar(x)
    sol = ode(math.pi / 6)
    p = tau_params(math.pi / 6)
    pair = legendre_dual(sol, p)
    X = annulus(20, 2.0, 50.0)
    Xt = pair.forward(X)
    shift = p.a + p.b
    u_bar = sol.value(X) + 0.5 * shift * np.sum(X * X, -1)
    v = np.sum(X * Xt, -1) - u_bar
    expected = 0.5 * np.sum(Xt * Xt, -1) - 2 * p.b * v
    assert np.allclose(pair.dual.value(Xt), expected, rtol=1e-10, atol=1e-9)


def test_gradient_map_involution():
    sol = ode(math.pi / 6)
    pair = legendre_dual(sol, math.pi / 6)
    X = annulus(100, 1.5, 500.0)
    back = pair.inverse(pair.forward(X))
    assert np.max(np.linalg.norm(back - X, axis=-1) / np.linalg.norm(X, axis=-1)) < 1e-10


def test_dual_rejects_other_branches():
    with pytest.raises(ValueError):
        legendre_dual(ode(math.pi / 3), math.pi / 3)
    with pytest.raises(ValueError):
        rotate_large_tau(ode(math.pi / 6), math.pi / 6)


@pytest.mark.parametrize("tau", [math.pi / 3, 3 * math.pi / 8, 0.4 * math.pi])
def test_rotation_solves_special_lagrangian(tau):
    v = rotate_large_tau(ode(tau, 1.2), tau)
    assert v.tau.tau == pytest.approx(math.pi / 2)
    X = annulus(200, 1.01, 900.0)
    assert np.max(np.abs(v.residual(X))) < 1e-9


@pytest.mark.parametrize("negate", [False, True])
def test_three_term_reduction(negate):
    g = GeneralCoeffs(0.0, 1.0, 1.0)
    sol = three_term_radial(g, 1.0, negate=negate)
    pair = three_term_reduce(sol, g)
    assert pair.negated is negate
    Y = annulus(50, pair.dual.r_min * 1.01, pair.dual.r_min * 1e3)
    l1, l2, _ = eigen_sym2(pair.dual.hessian(Y))
    assert np.max(np.abs(l1 * l2 / pair.dual_constant - 1)) < 1e-8


def test_convexity_margin():
    # the MA solution is convex but not above 1 - ... for a strongly negative shift requirement
    sol = three_term_radial(GeneralCoeffs(0.0, 1.0, 1.0), 1.0)
    with pytest.raises(ConvexityMargin):
        three_term_reduce(sol, GeneralCoeffs(0.0, -3.0, 1.0))
