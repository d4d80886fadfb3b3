"""Acceptance criteria, each at its stated tolerance.

Every test records one or more parts through the ``acceptance`` fixture; the
terminal summary prints one PASS/FAIL line per criterion.
"""

import math
import time

import numpy as np
import pytest

from gradgraph2d import (AffineFrame, GeneralCoeffs, arctan_identity_gap, df_matrix, df_tau,
                         eigen_sym2, f_tau, ma_radial_exact, q_matrix, radial_ode_solution,
                         sl_radial_exact, tau_params, three_term_radial, transform)
from gradgraph2d.asymptotics import (AsymptoticExpansion, flux_independence, remainder_check,
                                     symmetry_check)
from gradgraph2d.cli import parse_config, run
from gradgraph2d.expansion import ExpansionCoeffs
from gradgraph2d.harmonics import ModeSolution, basis_function, mode_residual, poisson_solve
from gradgraph2d.legendre import legendre_dual, rotate_large_tau
from gradgraph2d.operators import Branch, admissibility
from gradgraph2d.report import canonical_json
from gradgraph2d.solutions import RingSamples, perturbed
from gradgraph2d._validation import angle_grid, geometric_ladder

LN2 = math.log(2.0)
RADII = [5.0, 10.0, 20.0]


def _admissible(rng, p, n):
    """Random eigenvalues strictly inside the admissible set of ``p``."""
    lo = admissibility(p).lower_bound
    if lo is None:
        return rng.uniform(-5.0, 5.0, n)
    return lo + np.exp(rng.uniform(-3.0, 2.0, n))


def _random_taus(rng, n):
    special = [0.0, math.pi / 4, math.pi / 2]
    return [special[i % 3] if i % 4 == 0 else float(rng.uniform(0.01, math.pi / 2 - 0.01))
            for i in range(n)]


def _ode(tau, p0=1.3):
    return radial_ode_solution(tau, float(f_tau(tau, 1.0, 1.0)), 1.0, p0, 1e4)


def _annulus(rng, n, lo, hi):
    r = np.exp(rng.uniform(math.log(lo), math.log(hi), n))
    t = rng.uniform(0.0, 2 * math.pi, n)
    return np.stack([r * np.cos(t), r * np.sin(t)], axis=-1)


# ---------------------------------------------------------------- 1

def test_criterion_1_operator_identities(acceptance):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()

    worst_fd = 0.0
    for tau in _random_taus(rng, 10):
        p = tau_params(tau)
        lam = _admissible(rng, p, 100)
        h = 1e-5 * np.maximum(1.0, np.abs(lam))
        lo = admissibility(p).lower_bound
        if lo is not None:
            h = np.minimum(h, 0.25 * (lam - lo))
        # one eigenvalue varies, the other is held fixed
        other = _admissible(rng, p, 100)
        fd = (f_tau(p, lam + h, other) - f_tau(p, lam - h, other)) / (2 * h)
        worst_fd = max(worst_fd, float(np.max(np.abs(fd - df_tau(p, lam)) / np.abs(df_tau(p, lam)))))

    worst_q = 0.0
    for tau in _random_taus(rng, 100):
        p = tau_params(tau)
        l1, l2 = _admissible(rng, p, 2)
        ang = rng.uniform(0, math.pi)
        c, s = math.cos(ang), math.sin(ang)
        R = np.array([[c, -s], [s, c]])
        A = R @ np.diag([l1, l2]) @ R.T
        worst_q = max(worst_q, float(np.max(np.abs(q_matrix(p, A) @ df_matrix(p, A) - 0.5 * np.eye(2)))))

    worst_gap = 0.0
    for tau in rng.uniform(math.pi / 4 + 0.01, math.pi / 2 - 0.01, 10):
        p = tau_params(tau)
        gap = arctan_identity_gap(p, _admissible(rng, p, 100), _admissible(rng, p, 100))
        worst_gap = max(worst_gap, float(np.max(np.abs(gap))))
    elapsed = time.perf_counter() - t0

    ok = acceptance(1, "df_tau vs finite differences (1000 points)", worst_fd <= 1e-7, f"max rel {worst_fd:.2e}")
    ok &= acceptance(1, "Q DF(A) = I/2 (100 pairs)", worst_q <= 1e-12, f"max {worst_q:.2e}")
    ok &= acceptance(1, "arctan identity gap (1000 points)", worst_gap <= 1e-12, f"max {worst_gap:.2e}")
    ok &= acceptance(1, "runtime < 1 s", elapsed < 1.0, f"{elapsed:.3f} s")
    assert ok


# ---------------------------------------------------------------- 2

@pytest.mark.parametrize("C0", [0.0, LN2], ids=["C0=0", "C0=ln2"])
@pytest.mark.parametrize("c1", [0.0, 1.0, 2.0])
def test_criterion_2_monge_ampere_oracle(acceptance, C0, c1):
    sol = ma_radial_exact(C0, c1)
    oracle = c1 * math.exp(-C0) / 4
    fit = AsymptoticExpansion().fit(sol).coeffs_
    rep = flux_independence(sol, 0.0, C0, RADII)
    fit_err = abs(fit.d - oracle)
    flux_err = float(np.max(np.abs(rep.d_values - oracle)))
    tag = f"C0={C0:.3f}, c1={c1:g}"
    ok = acceptance(2, f"fitted d ({tag})", fit_err <= 1e-6, f"|d - oracle| = {fit_err:.2e}")
    ok &= acceptance(2, f"flux (i) d ({tag})", flux_err <= 1e-8, f"max err {flux_err:.2e}")
    ok &= acceptance(2, f"flux spread ({tag})", rep.spread <= 1e-9, f"{rep.spread:.2e}")
    assert ok


# ---------------------------------------------------------------- 3

@pytest.mark.parametrize("c1", [1.0, 2.0])
def test_criterion_3_special_lagrangian_oracle(acceptance, c1):
    sol = sl_radial_exact(c1)
    fit = AsymptoticExpansion().fit(sol).coeffs_
    rep = flux_independence(sol, math.pi / 2, math.pi / 2, RADII)
    fit_err = abs(fit.d - c1 / 4)
    flux_err = float(np.max(np.abs(rep.d_values - c1 / 4)))
    ok = acceptance(3, f"fitted d (c1={c1:g})", fit_err <= 1e-6, f"{fit_err:.2e}")
    ok &= acceptance(3, f"flux (v) d (c1={c1:g})", flux_err <= 1e-6, f"{flux_err:.2e}")
    assert ok


# ---------------------------------------------------------------- 4

def _dual_eigen_checks(sol, p):
    """Log-sum of the dual eigenvalues ``(l + a - b)/(l + a + b)`` against ``2 b C0 sin(tau)``."""
    rng = np.random.default_rng(4)
    X = _annulus(rng, 100, 1.5, 1e3)
    L1, L2, _ = eigen_sym2(sol.hessian(X))
    mu = [(L + p.a - p.b) / (L + p.a + p.b) for L in (L1, L2)]
    target = 2 * p.b * sol.C0 / math.sqrt(p.a ** 2 + 1)
    with np.errstate(invalid="ignore"):
        logsum = np.log(mu[0]) + np.log(mu[1])
    dev = np.abs(logsum - target)
    return float(np.max(np.where(np.isfinite(dev), dev, np.inf)))


@pytest.mark.xfail(strict=True, reason="tau = pi/3 lies on the arctan branch; the dual "
                                       "eigenvalues satisfy an arctan-sum equation, not the log-sum one")
def test_criterion_4_dual_at_pi_3_as_stated(acceptance):
    sol = _ode(math.pi / 3)
    p = tau_params(math.pi / 3)
    dev = _dual_eigen_checks(sol, p)
    ok = acceptance(4, "dual MA constant at tau=pi/3 (as stated)", dev <= 1e-8, f"max dev {dev:.2e}")
    assert ok


def test_criterion_4_dual_on_small_tau_branch(acceptance):
    sol = _ode(math.pi / 6)
    p = tau_params(math.pi / 6)
    pair = legendre_dual(sol, p)
    dual = pair.dual
    rng = np.random.default_rng(4)
    Y = _annulus(rng, 100, dual.r_min * 1.01, dual.r_max * 0.99)
    l1, l2, _ = eigen_sym2(dual.hessian(Y))
    target = 2 * p.b * sol.C0 / math.sqrt(p.a ** 2 + 1)
    const_dev = float(np.max(np.abs(np.log(l1) + np.log(l2) - target)))
    L1, L2, _ = eigen_sym2(sol.hessian(pair.inverse(Y)))
    ident = max(float(np.max(np.abs(l1 - (L1 + p.a - p.b) / (L1 + p.a + p.b)))),
                float(np.max(np.abs(l2 - (L2 + p.a - p.b) / (L2 + p.a + p.b)))))
    ok = acceptance(4, "dual MA constant at tau=pi/6", const_dev <= 1e-8, f"{const_dev:.2e}")
    ok &= acceptance(4, "eigenvalue identity at tau=pi/6 (100 points)", ident <= 1e-7, f"{ident:.2e}")
    assert ok


def test_criterion_4_rotation_at_3pi_8(acceptance):
    sol = _ode(3 * math.pi / 8, 1.2)
    v = rotate_large_tau(sol, 3 * math.pi / 8)
    rng = np.random.default_rng(4)
    Y = _annulus(rng, 1000, 1.01, 1e4 * 0.99)
    res = float(np.max(np.abs(v.residual(Y))))
    assert acceptance(4, "rotated tau=3pi/8 solution solves SL", res <= 1e-9, f"{res:.2e}")


# ---------------------------------------------------------------- 5

def test_criterion_5_mode_solver(acceptance):
    radii = geometric_ladder(10.0, 1e4, 40)
    b = radii ** -4.0
    ok = True
    for k, expected in ((0, 0.25), (1, 1.0 / 3.0)):
        sol = ModeSolution(k, radii, b, 4.0, 0.0)
        rel = float(np.max(np.abs(sol.value(radii) * radii ** 2 - expected)) / expected)
        res = float(np.max(mode_residual(sol)))
        ok &= acceptance(5, f"k={k} closed form", rel <= 1e-8, f"rel {rel:.2e}")
        ok &= acceptance(5, f"k={k} ODE residual (sign check)", res <= 1e-8, f"{res:.2e}")

    thetas = angle_grid(32)

    def manufactured(terms):
        g = np.zeros((radii.size, thetas.size))
        exact = np.zeros_like(g)
        for k, m, pw, amp in terms:
            Y = basis_function(k, m, thetas)[None]
            exact += amp * radii[:, None] ** -pw * Y
            g += amp * (pw * pw - k * k) * radii[:, None] ** (-pw - 2) * Y
        return g, exact

    # g = r^-4 (1 + cos t) has v = (1/4 + cos(t)/3) r^-2
    g = radii[:, None] ** -4.0 * (1 + np.cos(thetas))[None]
    res = poisson_solve(RingSamples(radii, thetas, g), 4.0, 0.0)
    exact = (0.25 + np.cos(thetas)[None] / 3) * radii[:, None] ** -2.0
    err = float(np.max(np.abs(res.v.values - exact)) / np.max(np.abs(exact)))
    ok &= acceptance(5, "r^-4 (1 + cos) oracle", err <= 1e-8, f"rel {err:.2e}")

    # modes with k < k1 - 2 have a unique fastest-decaying solution, the manufactured one
    g, exact = manufactured([(0, 1, 2.0, 1.0), (1, 1, 2.0, 0.5), (1, 2, 3.0, -0.25)])
    res = poisson_solve(RingSamples(radii, thetas, g), 4.0, 0.0)
    err = float(np.max(np.abs(res.v.values - exact)) / np.max(np.abs(exact)))
    ok &= acceptance(5, "manufactured Poisson solution", err <= 1e-8, f"rel {err:.2e}")
    for label, terms in (("k < k1-2", [(0, 1, 2.0, 1.0), (1, 1, 2.0, 0.5)]),
                         ("with a k = 2 mode", [(0, 1, 2.0, 1.0), (2, 1, 3.0, 0.5), (3, 2, 4.0, 0.2)])):
        g, _ = manufactured(terms)
        res = poisson_solve(RingSamples(radii, thetas, g), 4.0, 0.0)
        cert = res.certificate
        ok &= acceptance(5, f"decay envelope bounded ({label})", cert.bounded,
                         f"sup_ratio {cert.sup_ratio:.3g}, inner {cert.inner_sup_ratio:.3g}")
        ok &= acceptance(5, f"mode residual ({label})", res.residual <= 1e-8, f"{res.residual:.2e}")
    assert ok


# ---------------------------------------------------------------- 6

def _exact_families():
    yield "ma_C0_0_c1_1", ma_radial_exact(0.0, 1.0)
    yield "ma_C0_ln2_c1_2", ma_radial_exact(LN2, 2.0)
    yield "ma_shape", ma_radial_exact(0.3, 1.0, shape=[[2.0, 0.5], [0.5, 1.0]])
    yield "ma_translated", transform(ma_radial_exact(0.0, 1.0), AffineFrame(x0=(1.0, 0.0)))
    yield "ma_rotated_translated", transform(ma_radial_exact(0.3, 1.0, shape=[[2.0, 0.5], [0.5, 1.0]]),
                                             AffineFrame(0.7, (0.5, -1.0), (0.3, 0.2), 1.0))
    yield "sl_c1_1", sl_radial_exact(1.0)
    yield "sl_c1_2", sl_radial_exact(2.0)
    yield "sl_translated", transform(sl_radial_exact(1.0), AffineFrame(x0=(0.5, 0.25)))
    yield "three_term", three_term_radial(GeneralCoeffs(0.0, 1.0, 1.0), 1.0)
    yield "three_term_negated", three_term_radial(GeneralCoeffs(0.0, 1.0, 1.0), 1.0, negate=True)


@pytest.mark.parametrize("name,sol", list(_exact_families()), ids=lambda v: v if isinstance(v, str) else "")
def test_criterion_6_remainder_slope(acceptance, name, sol):
    fit = AsymptoticExpansion().fit(sol).coeffs_
    t = sol.truth
    known = {f: getattr(t, f) for f in ("A", "beta", "gamma", "d", "d1", "d2", "Q") if getattr(t, f) is not None}
    coeffs = fit.replace(**known)
    cert = remainder_check(sol, coeffs, geometric_ladder(1e2, 1e4, 40), threshold=-1.8)
    slope = -math.inf if cert.extra["rounding_level"] else cert.slope_estimate
    assert acceptance(6, f"remainder slope ({name})", cert.extra["passed"], f"slope {slope:.3f}")


# ---------------------------------------------------------------- 7

def test_criterion_7_dipole_transport(acceptance):
    sol = transform(ma_radial_exact(0.0, 1.0), AffineFrame(x0=(1.0, 0.0)))
    c = AsymptoticExpansion().fit(sol).coeffs_
    ok = acceptance(7, "d1 = -0.5", abs(c.d1 + 0.5) <= 1e-4, f"d1 = {c.d1:.8f}")
    ok &= acceptance(7, "d2 = 0", abs(c.d2) <= 1e-4, f"d2 = {c.d2:.2e}")
    assert ok


# ---------------------------------------------------------------- 8

def test_criterion_8_reflection_symmetry(acceptance):
    beta = np.array([0.7, -0.4])
    ok = True
    cases = {
        "ma_shape_linear": transform(ma_radial_exact(0.3, 1.0, shape=[[2.0, 0.5], [0.5, 1.0]]),
                                     AffineFrame(beta_add=tuple(beta))),
        "sl_linear": transform(sl_radial_exact(1.0), AffineFrame(beta_add=tuple(beta))),
    }
    for name, sol in cases.items():
        rep = symmetry_check(sol, ExpansionCoeffs(A=sol.truth.A, beta=beta), n_samples=1000)
        ok &= acceptance(8, f"reflection identity ({name}, {rep.reflections_tested} reflections)",
                         rep.max_violation <= 1e-10, f"max {rep.max_violation:.2e}")

    base = ma_radial_exact(0.0, 1.0)
    eps = 1e-3

    def value(X):
        return eps * X[..., 0] ** 3

    def gradient(X):
        return np.stack([3 * eps * X[..., 0] ** 2, 0 * X[..., 0]], axis=-1)

    def hessian(X):
        H = np.zeros(X.shape[:-1] + (2, 2))
        H[..., 0, 0] = 6 * eps * X[..., 0]
        return H

    bad = perturbed(base, value, gradient, hessian)
    rep = symmetry_check(bad, ExpansionCoeffs(A=base.truth.A, beta=np.zeros(2)), n_samples=1000)
    ok &= acceptance(8, "negative control detected", rep.max_violation > 1e-6, f"violation {rep.max_violation:.2e}")
    assert ok


# ---------------------------------------------------------------- 9, 10

@pytest.fixture(scope="module")
def verify_all_reports():
    out = {}
    for threads in (1, 4, 1):
        cfg = parse_config({"schema_version": 1, "scenario": "verify-all"}, {"threads": threads})
        out.setdefault(threads, []).append(run(cfg))
    return out


def test_criterion_9_discrepancy_ledger(acceptance, verify_all_reports):
    report = verify_all_reports[1][0].to_dict()
    entries = {e["id"]: e for e in report.get("discrepancies", [])}
    checks = {c["name"]: c for c in report["checks"]}
    ok = True
    for ident in ("q_factor_two", "quarter_pi_flux_variant", "mode_ode_sign", "radial_ma_normalization"):
        present = ident in entries and bool(entries[ident]["evidence"])
        ok &= acceptance(9, f"entry {ident} with evidence", present)
    ev = entries["quarter_pi_flux_variant"]["evidence"]
    agree = ev["derivation_minus_fit_max"]
    ok &= acceptance(9, "pi/4 derivation variant matches fitted d", agree <= 1e-6, f"{agree:.2e}")
    ok &= acceptance(9, "Q DF(A) = I/2 evidence", checks["discrepancies:q_factor_two:Q_DF_is_half_identity"]["passed"])
    ok &= acceptance(9, "standard mode sign solves the ODE",
                     checks["discrepancies:mode_ode_sign:standard_residual"]["passed"])
    ok &= acceptance(9, "verify-all passes every check", report["summary"]["passed"],
                     f"{report['summary']['n_failed']} failed")
    assert ok


def test_criterion_10_determinism(acceptance, verify_all_reports):
    texts = [canonical_json(r.to_dict()) for runs in verify_all_reports.values() for r in runs]
    same = all(t == texts[0] for t in texts)
    assert acceptance(10, "report.json byte-identical across runs and thread counts", same,
                      f"{len(texts)} runs")
