"""Extraction of the expansion coefficients at infinity from an exterior solution."""

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..exceptions import InsufficientRings, NotConverging
from ..expansion import ExpansionCoeffs, evaluate_expansion
from ..harmonics import DecayCertificate, decay_slope
from ..operators import df_matrix, general_normalize
from .._validation import check_points, geometric_ladder
from ._common import (canonical_q, check_ladder, project_onto_equation, q_circle_points,
                      q_radius_range, ring_points)

__all__ = [
    "fit_A",
    "fit_beta_gamma_d",
    "fit_d1_d2",
    "remainder_check",
    "linearization_check",
    "AsymptoticExpansion",
]

_EPS = np.finfo(float).eps


def _lstsq(columns, y):
    """Least squares with unit-max column scaling; returns coefficients in original units."""
    X = np.stack(columns, axis=-1)
    scale = np.max(np.abs(X), axis=0)
    scale[scale == 0] = 1.0
    coef, *_ = np.linalg.lstsq(X / scale, y, rcond=None)
    return coef / (scale if y.ndim == 1 else scale[:, None])


def _subset_spread(fit, n):
    """Error proxy: change of a fit when the innermost third of rings is dropped."""
    full = fit(slice(None))
    outer = fit(slice(n // 3, None))
    return full, np.abs(np.asarray(full) - np.asarray(outer))


def fit_A(sol, radii, n_theta=256, project=True):
    """Limit of the ring-averaged Hessian.

    The averages behave like ``A + C r^-2`` plus faster terms when the
    solution is off-centre; ``A`` is the intercept of a least-squares fit in
    ``r^-2, r^-3, r^-4`` over the rings, then moved onto the
    equation surface by one Newton step.  Returns ``(A, error)``.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.size < 3:
        raise InsufficientRings("fit_A needs at least 3 rings")
    check_ladder(sol, radii[0], radii[-1])
    if sol.r_min > 0 and radii[-1] < 100 * sol.r_min:
        raise InsufficientRings("outermost ring must be at least 100 r_min")
    _, X = ring_points(radii, n_theta)
    H = sol.hessian(X).mean(axis=1)
    flat = H.reshape(radii.size, 4)

    # inter-ring differences should shrink at least like r^-2
    diff = np.max(np.abs(np.diff(flat, axis=0)), axis=1) * radii[1:] ** 2
    noise = 1e3 * _EPS * np.max(np.abs(flat)) * radii[1:] ** 2
    half = diff.size // 2
    inner = np.max(diff[:half]) if half else diff[0]
    if np.any(diff[half:] > 10 * inner + noise[half:]):
        raise NotConverging("ring-averaged Hessian does not settle like r^-2")

    def fit(sel):
        r = radii[sel]
        coef = _lstsq([np.ones_like(r), r ** -2.0, r ** -3.0, r ** -4.0], flat[sel])
        return coef[0]

    A, err = _subset_spread(fit, radii.size)
    A = A.reshape(2, 2)
    A = 0.5 * (A + A.T)
    if project:
        A = project_onto_equation(sol, A)
    return A, float(np.max(err)) + 10 * _EPS * float(np.max(np.abs(A)))


def _q_samples(sol, A, Q, radii, n_theta):
    lo, hi = q_radius_range(sol, Q, radii[0], radii[-1])
    rhos = np.geomspace(lo, hi, radii.size)
    th, X = q_circle_points(Q, rhos, n_theta)
    dev, grad, _ = sol.evaluate_split(X)
    # u - x^T A x / 2 without forming the large quadratic
    w0 = dev + 0.5 * np.einsum("...i,ij,...j->...", X, sol.a_ref - A, X)
    gdev = grad - X @ A
    return rhos, th, X, w0, gdev


def fit_beta_gamma_d(sol, A, radii, n_theta=256, Q=None):
    """``beta`` from Q-ellipse averages of ``Du - Ax``; ``(gamma, d)`` from averages of ``u - x^T A x/2 - beta.x``.

    On the ellipses ``x^T Q x = rho^2`` the log term is ``d ln rho^2`` and the
    dipole term averages to zero.  The fits carry ``rho^-2``-type correction
    columns and a ``rho^2`` column that absorbs any residual error in ``A``.
    Returns ``(beta, gamma, d, errors)``.
    """
    A = np.asarray(A, dtype=float)
    Q = canonical_q(sol, A) if Q is None else Q
    check_ladder(sol, radii[0], radii[-1])
    rhos, th, X, w0, gdev = _q_samples(sol, A, Q, radii, n_theta)
    gbar = gdev.mean(axis=1)

    def fit_beta(sel):
        r = rhos[sel]
        return _lstsq([np.ones_like(r), r ** -2.0, r ** -3.0], gbar[sel])[0]

    beta, beta_err = _subset_spread(fit_beta, rhos.size)
    wbar = (w0 - X @ beta).mean(axis=1)

    def fit_gd(sel):
        r = rhos[sel]
        lr = np.log(r)
        coef = _lstsq([np.ones_like(r), 2 * lr, r ** -2.0, r ** -2.0 * lr, r ** -4.0, r ** 2.0],
                      wbar[sel])
        return coef[:2]

    (gamma, d), gd_err = _subset_spread(fit_gd, rhos.size)
    errors = {"beta": float(np.max(beta_err)), "gamma": float(gd_err[0]), "d": float(gd_err[1])}
    return beta, float(gamma), float(d), errors


def fit_d1_d2(sol, coeffs, radii, n_theta=256):
    """Dipole coefficients ``d_k = lim (1/pi) int rho W(rho, t) (cos t, sin t) dt``.

    ``W`` is the remainder after the quadratic, linear, constant and log terms,
    sampled on ``x = Q^{-1/2} rho e(t)``.  Returns ``(d1, d2, errors)``.
    """
    A, Q = coeffs.A, coeffs.Q
    check_ladder(sol, radii[0], radii[-1])
    rhos, th, X, w0, _ = _q_samples(sol, A, Q, radii, n_theta)
    W = w0 - X @ coeffs.beta - coeffs.gamma - coeffs.d * np.log(rhos ** 2)[:, None]
    weight = 2.0 / th.size
    proj = np.stack([weight * (rhos[:, None] * W) @ np.cos(th),
                     weight * (rhos[:, None] * W) @ np.sin(th)], axis=-1)

    def fit(sel):
        r = rhos[sel]
        return _lstsq([np.ones_like(r), r ** -1.0, r ** -1.0 * np.log(r), r ** 2.0], proj[sel])[0]

    (d1, d2), err = _subset_spread(fit, rhos.size)
    return float(d1), float(d2), {"d1": float(err[0]), "d2": float(err[1])}


def _sup_certificate(radii, sups, threshold, k1=4.0, k2=0.0, floor=0.0):
    """Slope certificate; data at or below ``floor`` counts as exact."""
    sups = np.asarray(sups, dtype=float)
    extra = {"threshold": threshold}
    keep = sups > floor
    if np.count_nonzero(keep) < 6:
        extra.update(passed=True, rounding_level=True)
        return DecayCertificate(k1, k2, 0.0, math.nan, math.nan, 0.0, extra)
    r, s = radii[keep], sups[keep]
    slope, ci = decay_slope(r, s)[:2]
    lr = r > 1
    ratio = s[lr] * r[lr] ** (k1 - 2) * np.log(r[lr]) ** (-k2 - 1)
    sup_ratio = float(np.max(ratio)) if ratio.size else math.nan
    inner = float(np.max(ratio[: max(ratio.size // 3, 1)])) if ratio.size else math.nan
    extra.update(passed=bool(slope <= threshold), rounding_level=False)
    return DecayCertificate(k1, k2, sup_ratio, float(slope), float(ci), inner, extra)


def remainder_check(sol, coeffs, radii, n_theta=128, threshold=-1.8):
    """Sup over each ring of ``|u - expansion|`` and its log-log slope.

    The difference is formed against ``sol.a_ref`` so that the large
    quadratic parts cancel exactly when ``coeffs.A`` equals it.
    """
    radii = np.asarray(radii, dtype=float)
    check_ladder(sol, radii[0], radii[-1])
    _, X = ring_points(radii, n_theta)
    dev = sol.deviation(X)
    rem = dev - evaluate_expansion(coeffs, X, a_ref=sol.a_ref)
    sups = np.max(np.abs(rem), axis=1)
    floor = 1e2 * _EPS * (1.0 + float(np.max(np.abs(dev))))
    cert = _sup_certificate(radii, sups, threshold, floor=floor)
    cert.extra["sups"] = sups.tolist()
    return cert


def _linearized_coefficients(sol, M):
    if sol.general is not None:
        g = sol.general
        # DG(M) = c2 adj(M) + c1 I
        adj = np.empty_like(M)
        adj[..., 0, 0], adj[..., 1, 1] = M[..., 1, 1], M[..., 0, 0]
        adj[..., 0, 1], adj[..., 1, 0] = -M[..., 0, 1], -M[..., 1, 0]
        general_normalize(g)
        return g.c2 * adj + g.c1 * np.eye(2)
    return df_matrix(sol.tau, M)


def linearization_check(sol, A, radii, n_theta=128, threshold=-1.8):
    """Decay of ``sup |DF(D^2u) - DF(A)|`` over rings."""
    radii = np.asarray(radii, dtype=float)
    check_ladder(sol, radii[0], radii[-1])
    _, X = ring_points(radii, n_theta)
    diff = _linearized_coefficients(sol, sol.hessian(X)) - _linearized_coefficients(sol, np.asarray(A))
    sups = np.max(np.abs(diff), axis=(1, 2, 3))
    floor = 1e2 * _EPS * float(np.max(np.abs(_linearized_coefficients(sol, np.asarray(A)))))
    return _sup_certificate(radii, sups, threshold, floor=floor)


class AsymptoticExpansion(BaseEstimator):
    """Fit ``u ~ x^T A x/2 + beta.x + gamma + d ln(x^T Q x) + (x^T Q x)^{-1/2} (d1 e1 + d2 e2)``.

    ``fit`` takes an :class:`~gradgraph2d.solutions.ExteriorSolution` and
    samples it on a geometric ladder of ``n_rings`` radii in
    ``[r_min, r_max]`` with ``n_theta`` angles.  ``q_scale`` reports the
    coefficients relative to ``q_scale * Q`` instead of the canonical Q.

    Attributes
    ----------
    coeffs_ : ExpansionCoeffs
    radii_ : ndarray
    """

    def __init__(self, r_min=10.0, r_max=1e4, n_rings=40, n_theta=256, project=True,
                 q_scale=1.0, fit_dipole=True):
        self.r_min = r_min
        self.r_max = r_max
        self.n_rings = n_rings
        self.n_theta = n_theta
        self.project = project
        self.q_scale = q_scale
        self.fit_dipole = fit_dipole

    def fit(self, sol, y=None):
        radii = geometric_ladder(self.r_min, self.r_max, self.n_rings)
        A, a_err = fit_A(sol, radii, self.n_theta, project=self.project)
        Q = canonical_q(sol, A)
        beta, gamma, d, errors = fit_beta_gamma_d(sol, A, radii, self.n_theta, Q=Q)
        errors["A"] = a_err
        coeffs = ExpansionCoeffs(A=A, beta=beta, gamma=gamma, d=d, Q=Q, errors=errors)
        if self.fit_dipole:
            d1, d2, derr = fit_d1_d2(sol, coeffs, radii, self.n_theta)
            coeffs = coeffs.replace(d1=d1, d2=d2, errors={**errors, **derr})
        if self.q_scale != 1.0:
            coeffs = coeffs.rescaled_q(self.q_scale)
        self.coeffs_ = coeffs
        self.radii_ = radii
        return self

    def predict(self, X):
        check_is_fitted(self)
        return evaluate_expansion(self.coeffs_, check_points(X))

    def remainder(self, sol, X):
        """``u - expansion`` at ``X``, formed against the solution's reference quadratic."""
        check_is_fitted(self)
        return sol.deviation(X) - evaluate_expansion(self.coeffs_, X, a_ref=sol.a_ref)
