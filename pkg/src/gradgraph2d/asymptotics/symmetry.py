"""Reflection symmetry in the eigenframe of A and level-set radiality checks."""

import math
from dataclasses import dataclass

import numpy as np

from ..exceptions import DomainViolation
from ..operators import eigen_sym2
from ..solutions import AffineFrame
from .._validation import check_sym2

__all__ = ["SymmetryReport", "RadialityReport", "reflections", "symmetry_check", "radiality_check"]


@dataclass
class SymmetryReport:
    max_violation: float
    reflections_tested: int
    frame: AffineFrame
    per_reflection: tuple = ()

    def to_dict(self):
        return {"max_violation": self.max_violation, "reflections_tested": self.reflections_tested,
                "frame": self.frame.to_dict(), "per_reflection": list(self.per_reflection)}


def reflections(A):
    """The three nontrivial sign flips in the eigenframe of ``A`` as matrices ``V S V^T``."""
    _, _, ang = eigen_sym2(check_sym2(A))
    c, s = math.cos(float(ang)), math.sin(float(ang))
    V = np.array([[c, -s], [s, c]])
    out = []
    for signs in ((-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)):
        out.append(V @ np.diag(signs) @ V.T)
    return out, float(ang)


def symmetry_check(sol, coeffs, n_samples=1000, r_range=None, seed=0):
    """Largest ``|(u - beta.x)(Rx) - (u - beta.x)(x)|`` over random points and reflections ``R``."""
    rng = np.random.default_rng(seed)
    center_dist = float(np.linalg.norm(sol.center))
    if center_dist > 0:
        raise DomainViolation("symmetry check needs a solution centred at the origin")
    if r_range is None:
        lo = sol.r_min * 1.5 if sol.r_min > 0 else 0.1
        r_range = (lo, min(100.0 * max(lo, 1.0), sol.r_max))
    lo, hi = r_range
    r = np.exp(rng.uniform(math.log(lo), math.log(hi), n_samples))
    t = rng.uniform(0.0, 2 * math.pi, n_samples)
    X = np.stack([r * np.cos(t), r * np.sin(t)], axis=-1)
    beta = np.asarray(coeffs.beta, dtype=float)
    base = sol.value(X) - X @ beta
    mats, ang = reflections(coeffs.A)
    per = []
    for R in mats:
        Xr = X @ R.T
        per.append(float(np.max(np.abs(sol.value(Xr) - Xr @ beta - base))))
    return SymmetryReport(max(per), len(mats), AffineFrame(rotation_angle=ang), tuple(per))


@dataclass
class RadialityReport:
    levels: np.ndarray
    spreads: np.ndarray
    tolerances: np.ndarray

    @property
    def passed(self):
        return bool(np.all(self.spreads <= self.tolerances))

    def to_dict(self):
        return {"levels": self.levels.tolist(), "spreads": self.spreads.tolist(),
                "tolerances": self.tolerances.tolist(), "passed": self.passed}


def radiality_check(sol, K, A, n_levels=8, n_theta=256, r_range=None, rel_tol=1e-8):
    """Spread of ``u + K|x|^2/2`` along level sets of ``x^T (A + K I) x / 2``.

    Passes iff every spread is at most ``rel_tol (1 + |mean value on the level|)``.
    """
    B = check_sym2(A) + float(K) * np.eye(2)
    w, V = np.linalg.eigh(B)
    if np.any(w <= 0):
        raise DomainViolation("A + K I must be positive definite")
    if r_range is None:
        lo = max(sol.r_min * 1.5, 0.5)
        r_range = (lo, min(100.0 * lo, sol.r_max))
    lo, hi = r_range
    # ellipse x = B^{-1/2} sqrt(2 q) e must stay inside [lo, hi]
    q_lo = 0.5 * lo * lo * w[-1]
    q_hi = 0.5 * hi * hi * w[0]
    if not q_lo < q_hi:
        raise DomainViolation("A + K I too anisotropic for the sampling annulus")
    levels = np.geomspace(q_lo * 1.01, q_hi * 0.99, n_levels)
    th = 2 * math.pi * np.arange(n_theta) / n_theta
    e = np.stack([np.cos(th), np.sin(th)], axis=-1)
    Bmh = (V / np.sqrt(w)) @ V.T
    spreads, tols = [], []
    for q in levels:
        X = math.sqrt(2 * q) * e @ Bmh.T
        vals = sol.value(X) + 0.5 * K * np.einsum("...i,...i->...", X, X)
        spreads.append(float(np.max(vals) - np.min(vals)))
        tols.append(rel_tol * (1.0 + abs(float(np.mean(vals)))))
    return RadialityReport(levels, np.array(spreads), np.array(tols))
