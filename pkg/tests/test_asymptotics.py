import math

import numpy as np
import pytest
from sklearn.base import clone

from gradgraph2d import AffineFrame, GeneralCoeffs, f_tau, ma_radial_exact, quadratic, radial_ode_solution
from gradgraph2d import sl_radial_exact, three_term_radial, transform
from gradgraph2d.asymptotics import (AsymptoticExpansion, FormulaId, fit_A, flux_d, flux_independence,
                                     linearization_check, log_flux_identity, quadrature_selftests,
                                     radiality_check, reflections, remainder_check, symmetry_check)
from gradgraph2d.exceptions import DomainViolation, InsufficientRings, NotConverging
from gradgraph2d.expansion import ExpansionCoeffs, evaluate_expansion
from gradgraph2d.operators import tau_params
from gradgraph2d.solutions import perturbed
from gradgraph2d._validation import geometric_ladder

RADII = geometric_ladder(10.0, 1e4, 40)


def ode(tau, p0=1.3):
    return radial_ode_solution(tau, float(f_tau(tau, 1.0, 1.0)), 1.0, p0, 1e4)


def cubic(eps, power=3):
    def value(X):
        return eps * np.linalg.norm(X, axis=-1) ** power

    def gradient(X):
        r = np.linalg.norm(X, axis=-1, keepdims=True)
        return eps * power * r ** (power - 2) * X

    def hessian(X):
        r = np.linalg.norm(X, axis=-1)[..., None, None]
        outer = X[..., :, None] * X[..., None, :]
        return eps * power * (r ** (power - 2) * np.eye(2) + (power - 2) * r ** (power - 4) * outer)
    return value, gradient, hessian


def test_estimator_params_and_clone():
    est = AsymptoticExpansion(r_min=20.0, n_rings=30)
    params = clone(est).get_params()
    assert params["r_min"] == 20.0 and params["n_rings"] == 30


def test_predict_matches_solution():
    sol = ma_radial_exact(0.3, 1.0)
    est = AsymptoticExpansion().fit(sol)
    X = np.array([[300.0, 400.0], [-2e3, 1e3]])
    # the remainder is O(|x|^-2 ln|x|) relative to the value
    assert np.max(np.abs(est.remainder(sol, X))) < 1e-5
    assert np.allclose(est.predict(X), sol.value(X), rtol=1e-10)


def test_quadratic_has_no_log_or_dipole():
    sol = quadratic([[2.0, 0.3], [0.3, 1.0]], (1.0, 2.0), 3.0, tau=math.pi / 3)
    c = AsymptoticExpansion().fit(sol).coeffs_
    assert abs(c.d) < 1e-12 and abs(c.d1) < 1e-9 and abs(c.d2) < 1e-9
    assert c.gamma == pytest.approx(3.0, abs=1e-12)
    assert np.allclose(c.beta, [1.0, 2.0], atol=1e-12)


def test_anisotropic_frame_recovers_truth():
    sol = transform(ma_radial_exact(0.3, 1.0, shape=[[2.0, 0.5], [0.5, 1.0]]),
                    AffineFrame(0.7, (0.5, -1.0), (0.3, 0.2), 1.0))
    c = AsymptoticExpansion().fit(sol).coeffs_
    t = sol.truth
    assert np.max(np.abs(c.A - t.A)) < 1e-8
    assert np.max(np.abs(c.beta - t.beta)) < 1e-6
    assert abs(c.gamma - t.gamma) < 1e-6
    assert abs(c.d - t.d) < 1e-9
    assert abs(c.d1 - t.d1) < 1e-4 and abs(c.d2 - t.d2) < 1e-4


def test_q_rescaling_is_covariant():
    sol = transform(ma_radial_exact(0.0, 1.0), AffineFrame(x0=(1.0, 0.5)))
    base = AsymptoticExpansion().fit(sol).coeffs_
    scaled = AsymptoticExpansion(q_scale=2.0).fit(sol).coeffs_
    assert scaled.d == base.d
    assert scaled.gamma == pytest.approx(base.gamma - base.d * math.log(2.0))
    assert scaled.d1 == pytest.approx(base.d1 * math.sqrt(2.0))
    X = np.array([[500.0, -700.0]])
    assert evaluate_expansion(scaled, X) == pytest.approx(evaluate_expansion(base, X), rel=1e-13)


def test_fit_a_needs_a_wide_ladder():
    with pytest.raises(InsufficientRings):
        fit_A(ode(math.pi / 6), np.geomspace(2, 50, 10))
    with pytest.raises(InsufficientRings):
        fit_A(ma_radial_exact(0.0, 1.0), [10.0, 1e3])


def test_fit_a_detects_non_convergence():
    sol = perturbed(ma_radial_exact(0.0, 1.0), *cubic(1e-3))
    with pytest.raises(NotConverging):
        fit_A(sol, RADII)


def test_ladder_inside_hole():
    sol = transform(ma_radial_exact(0.0, 1.0), AffineFrame(x0=(20.0, 0.0)))
    with pytest.raises(DomainViolation):
        AsymptoticExpansion(r_min=10.0).fit(sol)


def test_remainder_and_linearization_slopes():
    sol = ma_radial_exact(0.0, 2.0)
    cert = remainder_check(sol, sol.truth, geometric_ladder(1e2, 1e4, 30))
    assert cert.extra["passed"]
    assert cert.slope_estimate < -1.9
    lin = linearization_check(sol, sol.truth.A, geometric_ladder(1e2, 1e4, 30))
    assert lin.extra["passed"]
    # a wrong log coefficient leaves an O(ln r) remainder
    wrong = sol.truth.replace(d=sol.truth.d + 1e-3)
    assert not remainder_check(sol, wrong, geometric_ladder(1e2, 1e4, 30)).extra["passed"]


@pytest.mark.parametrize("tau", [math.pi / 8, math.pi / 6, math.pi / 4, math.pi / 3, 3 * math.pi / 8])
def test_flux_matches_fit_on_ode_solutions(tau):
    sol = ode(tau)
    rep = flux_independence(sol, tau, sol.C0, [5.0, 10.0, 20.0])
    d_fit = AsymptoticExpansion().fit(sol).coeffs_.d
    assert rep.passed
    assert np.max(np.abs(rep.d_values - d_fit)) < 1e-8


def test_small_tau_printed_variant_carries_factor_b():
    sol = ode(math.pi / 6)
    res = flux_d(sol, math.pi / 6, sol.C0, 10.0)
    b = tau_params(math.pi / 6).b
    v = res.variants
    assert res.formula_id is FormulaId.SMALL_TAU
    assert v[FormulaId.SMALL_TAU_PAPER.value] == pytest.approx(b * v[FormulaId.SMALL_TAU.value], rel=1e-12)


def test_printed_variants_are_reported_but_not_default():
    for tau, default, printed in ((math.pi / 4, FormulaId.QUARTER_PI_DERIVATION, FormulaId.QUARTER_PI_PAPER),
                                  (3 * math.pi / 8, FormulaId.LARGE_TAU_DERIVATION, FormulaId.LARGE_TAU_PAPER)):
        sol = ode(tau)
        res = flux_d(sol, tau, sol.C0, 10.0)
        assert res.formula_id is default
        assert printed.value in res.variants
        picked = flux_d(sol, tau, sol.C0, 10.0, formula=printed)
        assert picked.d == res.variants[printed.value]


def test_flux_off_centre_contour():
    sol = sl_radial_exact(1.0)
    a = flux_d(sol, math.pi / 2, math.pi / 2, 10.0).d
    b = flux_d(sol, math.pi / 2, math.pi / 2, 10.0, center=(2.0, -1.0)).d
    assert a == pytest.approx(0.25, abs=1e-12)
    assert b == pytest.approx(0.25, abs=1e-12)


@pytest.mark.parametrize("negate", [False, True])
def test_three_term_flux(negate):
    sol = three_term_radial(GeneralCoeffs(0.0, 1.0, 1.0), 1.0, negate=negate)
    rep = flux_independence(sol, sol.general, None, [5.0, 10.0, 20.0])
    assert np.allclose(rep.d_values, sol.truth.d, atol=1e-10)


def test_flux_contour_must_stay_in_domain():
    sol = ode(math.pi / 6)
    with pytest.raises(DomainViolation):
        flux_d(sol, math.pi / 6, sol.C0, 0.5)
    with pytest.raises(ValueError):
        flux_d(sol, math.pi / 6, sol.C0, 10.0, n_quad=16)


def test_quadrature_selftests_and_control():
    sol = ma_radial_exact(0.0, 1.0)
    good = quadrature_selftests(sol, 10.0)
    assert abs(good["exact_differential"]) < 1e-12 and abs(good["constant_vector"]) < 1e-14
    bad = quadrature_selftests(sol, 10.0, broken_normal=True)
    assert max(abs(bad["exact_differential"]), abs(bad["constant_vector"])) > 1e-3


def test_log_flux_identity():
    value, expected = log_flux_identity(np.array([[2.0, 0.5], [0.5, 1.0]]), 0.3, 7.0)
    assert value == pytest.approx(expected, rel=1e-12)


def test_reflections_fix_the_eigenframe():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    mats, _ = reflections(A)
    assert len(mats) == 3
    for R in mats:
        assert np.allclose(R @ A @ R.T, A)


def test_symmetry_needs_origin_centre():
    sol = transform(ma_radial_exact(0.0, 1.0), AffineFrame(x0=(1.0, 0.0)))
    with pytest.raises(DomainViolation):
        symmetry_check(sol, ExpansionCoeffs(A=np.eye(2), beta=np.zeros(2)))


def test_radiality():
    ma = ma_radial_exact(0.3, 1.0)
    assert radiality_check(ma, 0.0, ma.truth.A).passed
    o = ode(math.pi / 4)
    assert radiality_check(o, 1.0, o.truth.A).passed
    eps = 1e-3

    def value(X):
        return eps * X[..., 0] ** 3

    def gradient(X):
        return np.stack([3 * eps * X[..., 0] ** 2, 0 * X[..., 0]], axis=-1)

    def hessian(X):
        H = np.zeros(X.shape[:-1] + (2, 2))
        H[..., 0, 0] = 6 * eps * X[..., 0]
        return H
    assert not radiality_check(perturbed(ma, value, gradient, hessian), 0.0, ma.truth.A).passed
