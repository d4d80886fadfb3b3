"""Circular Fourier modes and the exterior Poisson solver ``Delta v = g``.

A mode ``a(r)`` of ``v`` solves ``a'' + a'/r - k^2 a / r^2 = b(r)`` where
``b`` is the matching mode of ``g``.  The particular solution decaying at
infinity is built from the integrals

    k = 0 :  a(r) = int_r^inf t (ln t - ln r) b(t) dt
    k >= 1:  a(r) = -(1/2k) r^k int_r^inf t^(1-k) b dt
                    + (1/2k) r^-k int_r^inf t^(1+k) b dt       (k < k1 - 2)
             a(r) = -(1/2k) r^k int_r^inf t^(1-k) b dt
                    - (1/2k) r^-k int_base^r t^(1+k) b dt      (k >= k1 - 2)

with ``b ~ r^-k1 (ln r)^k2``.  In ``s = ln r`` every integrand is
``w(s) c(s)`` with ``c = r^2 b`` and a bounded weight ``w``; ``c`` is
interpolated by a quintic spline after removing its power-law envelope and
integrated by Gauss-Legendre on each ladder interval.  Beyond the last ring a
power-log tail fitted to the outermost nodes is integrated exactly.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats
from scipy.interpolate import make_interp_spline
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import angle_grid, check_n_theta, check_radii
from .exceptions import Aliasing, InsufficientRings, TailDivergence
from .solutions import RingSamples

__all__ = [
    "ModeSeries",
    "ModeSolution",
    "DecayCertificate",
    "SlopeFit",
    "PoissonResult",
    "basis_function",
    "project_modes",
    "synthesize",
    "solve_mode0",
    "solve_modek",
    "poisson_solve",
    "decay_slope",
    "mode_residual",
    "growing_component",
    "ModeProjector",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)
_GLAG_X, _GLAG_W = np.polynomial.laguerre.laggauss(40)
_ZERO_MODE = 1e-13


@dataclass
class ModeSeries:
    """Radial profile of one circular mode: ``k`` frequency, ``m = 1`` cosine, ``m = 2`` sine."""

    k: int
    m: int
    radii: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        self.k, self.m = int(self.k), int(self.m)
        if self.k < 0 or self.m not in (1, 2) or (self.k == 0 and self.m == 2):
            raise ValueError(f"invalid mode (k={self.k}, m={self.m})")
        self.radii = check_radii(self.radii)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != self.radii.shape:
            raise ValueError("coeffs must match radii")


def basis_function(k, m, theta):
    """Orthonormal circle basis: ``1/sqrt(2 pi)``, ``cos(k t)/sqrt(pi)``, ``sin(k t)/sqrt(pi)``."""
    theta = np.asarray(theta, dtype=float)
    if k == 0:
        return np.full_like(theta, 1.0 / math.sqrt(2 * math.pi))
    f = np.cos if m == 1 else np.sin
    return f(k * theta) / math.sqrt(math.pi)


def _mode_order(kmax):
    yield 0, 1
    for k in range(1, kmax + 1):
        yield k, 1
        yield k, 2


def project_modes(rings, kmax):
    """Trapezoidal projections ``b_{k,m}(r) = int g(r, t) Y_m^(k)(t) dt`` for ``k <= kmax``.

    Ordered by ``k`` then ``m``.
    """
    kmax = int(kmax)
    n = rings.thetas.size
    if kmax < 0 or kmax >= n // 2:
        raise Aliasing(f"kmax={kmax} needs n_theta > {2 * kmax}, got {n}")
    values = np.asarray(rings.values, dtype=float)
    if values.ndim != 2:
        raise ValueError("project_modes needs scalar ring samples")
    w = 2 * math.pi / n
    out = []
    for k, m in _mode_order(kmax):
        coeffs = w * values @ basis_function(k, m, rings.thetas)
        out.append(ModeSeries(k, m, rings.radii, coeffs))
    return out


def synthesize(modes, thetas):
    """``sum_k,m a_{k,m}(r) Y_m^(k)(theta)`` on the grid radii x thetas."""
    thetas = np.asarray(thetas, dtype=float)
    total = 0.0
    for mode in modes:
        total = total + mode.coeffs[:, None] * basis_function(mode.k, mode.m, thetas)[None, :]
    return np.asarray(total)


class _Tail(NamedTuple):
    amplitude: float
    k1: float
    k2: float


def _fit_tail(radii, b, k1=None, k2=None):
    """Power-log model ``b ~ C r^-k1 (ln r)^k2`` from the outermost nodes.

    With ``k2`` given only ``(C, k1)`` are fitted (two nodes); otherwise all
    three from three nodes spread over the last few ladder steps.
    """
    n = radii.size
    idx = [n - 1, max(n - 1 - max(n // 8, 1), 0), max(n - 1 - 2 * max(n // 8, 1), 0)]
    r, v = radii[idx], b[idx]
    if np.all(v == 0):
        return _Tail(0.0, 3.0 if k1 is None else k1, 0.0 if k2 is None else k2)
    s = np.log(r)
    if np.all(v > 0) or np.all(v < 0):
        y = np.log(np.abs(v))
        if k2 is None and np.all(s > 0) and len(set(idx)) == 3:
            M = np.stack([np.ones(3), -s, np.log(s)], axis=-1)
            lnC, fk1, fk2 = np.linalg.solve(M, y)
        else:
            fk2 = 0.0 if k2 is None else float(k2)
            ls = np.log(s) if np.all(s > 0) else np.zeros_like(s)
            yy = y[:2] - fk2 * ls[:2]
            fk1 = -(yy[0] - yy[1]) / (s[0] - s[1])
            lnC = yy[0] + fk1 * s[0]
        if np.all(np.isfinite([lnC, fk1, fk2])):
            return _Tail(float(np.sign(v[0]) * math.exp(lnC)), float(fk1), float(fk2))
    # sign change near the top: fall back to the supplied envelope through the last node
    fk1 = 3.0 if k1 is None else float(k1)
    fk2 = 0.0 if k2 is None else float(k2)
    env = r[0] ** -fk1 * (math.log(r[0]) ** fk2 if r[0] > 1 else 1.0)
    return _Tail(float(v[0] / env), fk1, fk2)


class ModeSolution:
    """Decaying particular solution of one mode ODE, evaluable at any radius in the ladder span.

    Parameters
    ----------
    k : mode frequency.
    radii, b : samples of the right-hand side on a strictly increasing ladder.
    k1, k2 : decay exponents of ``b``; ``k1`` selects the particular solution
        for ``k >= 1``.  The tail beyond the last radius is fitted from data.
    convention : ``"standard"`` (variation of parameters, validated against
        the ODE) or ``"printed"``, whose ``k >= 1`` signs are reversed.
    scale : magnitude below which ``b`` counts as identically zero.
    """

    def __init__(self, k, radii, b, k1, k2=None, convention="standard", scale=None, base=None):
        self.k = int(k)
        self.radii = check_radii(radii, min_rings=6)
        self.b = np.asarray(b, dtype=float)
        self.k1 = float(k1)
        self.k2 = None if k2 is None else float(k2)
        if convention not in ("standard", "printed"):
            raise ValueError(f"unknown convention {convention!r}")
        self.convention = convention
        self.base = float(self.radii[0] if base is None else base)
        self.s = np.log(self.radii)
        self.c = self.radii ** 2 * self.b
        scale = float(np.max(np.abs(self.b))) if scale is None else float(scale)
        self.zero = not np.any(np.abs(self.b) > _ZERO_MODE * scale) or scale == 0
        self.both_tails = self.k >= 1 and self.k < self.k1 - 2
        if self.zero:
            return
        self.tail = _fit_tail(self.radii, self.b, self.k1, self.k2)
        # slowest exponential rate among the improper integrals this mode needs
        rate = 0 if self.k == 0 else (-self.k if self.both_tails else self.k)
        if self.tail.k1 - 2 + rate <= 0 or (self.k == 0 and self.k1 <= 2):
            raise TailDivergence(
                f"mode k={self.k}: tail exponent {self.tail.k1:.6g} too slow for the improper integral")
        # quintic spline of c(s) with the power-law envelope removed
        self._mu = 2.0 - self.tail.k1
        self._spline = make_interp_spline(self.s, self.c * np.exp(-self._mu * self.s), k=5)

    def _c(self, s):
        return np.exp(self._mu * s) * self._spline(s)

    def _int(self, weight, lo, hi):
        """``int_lo^hi weight(s) c(s) ds`` for ``lo <= hi`` inside the ladder span."""
        if hi <= lo:
            return 0.0
        knots = self.s[(self.s > lo) & (self.s < hi)]
        edges = np.concatenate([[lo], knots, [hi]])
        a, b = edges[:-1, None], edges[1:, None]
        x = 0.5 * (b - a) * _GL_X[None, :] + 0.5 * (a + b)
        vals = weight(x) * self._c(x)
        return float(np.sum(0.5 * (b - a)[:, 0] * (vals @ _GL_W)))

    def _int_tail(self, rate, factor, poly=None):
        """``C e^(-mu S) factor int_0^inf e^(-(mu + rate) t) poly(t) (S + t)^k2 dt``.

        The tail model is ``c(s) = C e^(-mu s) s^k2`` past the last node ``S``;
        the integral is done by Gauss-Laguerre, exact when ``k2`` is an integer.
        """
        t = self.tail
        S = self.s[-1]
        mu = t.k1 - 2.0
        lam = mu + rate
        x = _GLAG_X / lam
        f = (S + x) ** t.k2 if t.k2 else np.ones_like(x)
        if poly is not None:
            f = f * poly(x)
        return t.amplitude * math.exp(-mu * S) * factor * float(_GLAG_W @ f) / lam

    def value(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if self.zero:
            return np.zeros_like(r)
        out = np.empty_like(r)
        k = self.k
        S = self.s[-1]
        for i, ri in enumerate(r):
            s0 = math.log(ri)
            if k == 0:
                out[i] = (self._int(lambda s: s - s0, s0, S)
                          + self._int_tail(0.0, 1.0, lambda x: S + x - s0))
                continue
            first = (self._int(lambda s: np.exp(-k * (s - s0)), s0, S)
                     + self._int_tail(k, math.exp(-k * (S - s0))))
            first = -first / (2 * k)
            if self.both_tails:
                second = (self._int(lambda s: np.exp(k * (s - s0)), s0, S)
                          + self._int_tail(-k, math.exp(k * (S - s0)))) / (2 * k)
            else:
                second = -self._int(lambda s: np.exp(-k * (s0 - s)), math.log(self.base), s0) / (2 * k)
            total = first + second
            out[i] = -total if self.convention == "printed" else total
        return out

    def rhs(self, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if self.zero:
            return np.zeros_like(r)
        return self._c(np.log(r)) / r ** 2

    def series(self, m=1):
        return ModeSeries(self.k, 1 if self.k == 0 else m, self.radii, self.value(self.radii))


def mode_residual(sol, r=None, rel_step=2e-3):
    """Relative residual of ``a'' + a'/r - k^2 a/r^2 = b`` at interior radii.

    Derivatives use a five-point stencil of spacing ``rel_step * r`` on the
    continuous solution; the residual is scaled by the size of the terms.
    """
    radii = sol.radii
    if r is None:
        r = radii[(radii * (1 + 2 * rel_step) < radii[-1]) & (radii * (1 - 2 * rel_step) > radii[0])]
    r = np.asarray(r, dtype=float)
    if sol.zero:
        return np.zeros_like(r)
    h = rel_step * r
    offs = np.array([-2, -1, 0, 1, 2])
    vals = np.stack([sol.value(r + o * h) for o in offs], axis=-1)
    d1 = vals @ np.array([1, -8, 0, 8, -1]) / (12 * h)
    d2 = vals @ np.array([-1, 16, -30, 16, -1]) / (12 * h * h)
    a = vals[:, 2]
    k2 = sol.k * sol.k
    b = sol.rhs(r)
    res = d2 + d1 / r - k2 * a / r ** 2 - b
    size = np.abs(d2) + np.abs(d1 / r) + k2 * np.abs(a) / r ** 2 + np.abs(b)
    return np.abs(res) / np.where(size > 0, size, 1.0)


def growing_component(series):
    """Relative weight of an ``r^k`` component: ``|a(R)/R^k| / max_i |a(r_i)/r_i^k|`` (k >= 1)."""
    if series.k == 0:
        raise ValueError("defined for k >= 1")
    ratio = np.abs(series.coeffs) / series.radii ** series.k
    top = float(np.max(ratio))
    return 0.0 if top == 0 else float(ratio[-1] / top)


def solve_mode0(b, tail_model=None, **kwargs):
    """Decaying solution of ``a'' + a'/r = b`` for a ``k = 0`` mode.

    ``tail_model`` is ``(k1, k2)``; ``k1 <= 2`` raises :class:`TailDivergence`.
    """
    if b.k != 0:
        raise ValueError("solve_mode0 needs a k = 0 mode")
    k1, k2 = (4.0, None) if tail_model is None else tail_model
    if k1 <= 2:
        raise TailDivergence(f"k1={k1} <= 2: the k = 0 integrals diverge")
    sol = ModeSolution(0, b.radii, b.coeffs, k1, k2, **kwargs)
    return sol.series()


def solve_modek(k, b, k1, k2=None, **kwargs):
    """Decaying solution of the ``k >= 1`` mode ODE; ``k1`` picks the particular solution."""
    if k < 1:
        raise ValueError("solve_modek needs k >= 1")
    sol = ModeSolution(k, b.radii, b.coeffs, k1, k2, **kwargs)
    return sol.series(b.m)


class SlopeFit(NamedTuple):
    slope: float
    ci: float
    log_exponent: float | None = None
    log_exponent_ci: float | None = None


def decay_slope(radii, values, log_term=False, confidence=0.95, min_rings=6, min_decades=2.0):
    """Least-squares slope of ``ln values`` against ``ln r``.

    With ``log_term`` the model is ``ln v = c + slope ln r + e ln ln r``.
    ``ci`` is the half-width of the two-sided Student-t interval.
    """
    radii = check_radii(radii, min_rings=min_rings)
    values = np.asarray(values, dtype=float)
    if math.log10(radii[-1] / radii[0]) < min_decades - 1e-12:
        raise InsufficientRings(f"rings span less than {min_decades} decades")
    if values.shape != radii.shape or np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise ValueError("values must be finite, positive and match radii")
    x = np.log(radii)
    cols = [np.ones_like(x), x]
    if log_term:
        if np.any(radii <= 1):
            raise ValueError("log correction needs radii > 1")
        cols.append(np.log(x))
    X = np.stack(cols, axis=-1)
    y = np.log(values)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = x.size - X.shape[1]
    sigma2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = sigma2 * np.linalg.inv(X.T @ X)
    t = stats.t.ppf(0.5 + confidence / 2, dof) if dof > 0 else math.inf
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    if log_term:
        return SlopeFit(float(coef[1]), float(t * se[1]), float(coef[2]), float(t * se[2]))
    return SlopeFit(float(coef[1]), float(t * se[1]))


@dataclass
class DecayCertificate:
    """Evidence for ``|v| <= C r^(2-k1) (ln r)^(k2+1)``.

    ``sup_ratio`` is ``max_r sup_theta |v| r^(k1-2) (ln r)^(-k2-1)``;
    ``inner_sup_ratio`` is the same maximum over the innermost third of rings.
    """

    k1: float
    k2: float
    sup_ratio: float
    slope_estimate: float
    slope_ci: float
    inner_sup_ratio: float = math.nan
    extra: dict = field(default_factory=dict)

    @property
    def bounded(self):
        return bool(np.isfinite(self.sup_ratio) and self.sup_ratio <= 10 * self.inner_sup_ratio)

    def to_dict(self):
        out = {"k1": self.k1, "k2": self.k2, "sup_ratio": self.sup_ratio,
               "slope_estimate": self.slope_estimate, "slope_ci": self.slope_ci,
               "inner_sup_ratio": self.inner_sup_ratio}
        out.update(self.extra)
        return out


def certify_decay(radii, sups, k1, k2):
    """Certificate for per-ring sup values against the envelope ``r^(2-k1) (ln r)^(k2+1)``."""
    radii = np.asarray(radii, dtype=float)
    sups = np.asarray(sups, dtype=float)
    keep = radii > 1
    ratio = sups[keep] * radii[keep] ** (k1 - 2) * np.log(radii[keep]) ** (-k2 - 1)
    if ratio.size == 0:
        sup_ratio = inner = math.nan
    else:
        sup_ratio = float(np.max(ratio))
        inner = float(np.max(ratio[: max(ratio.size // 3, 1)]))
    positive = sups > 0
    slope = ci = math.nan
    if np.count_nonzero(positive) >= 6:
        try:
            slope, ci = decay_slope(radii[positive], sups[positive])[:2]
        except InsufficientRings:
            pass
    return DecayCertificate(float(k1), float(k2), sup_ratio, slope, ci, inner)


@dataclass
class PoissonResult:
    v: RingSamples
    certificate: DecayCertificate
    modes: list
    residual: float

    def __iter__(self):
        yield self.v
        yield self.certificate


def poisson_solve(g, k1, k2=0.0, kmax=None, convention="standard"):
    """Decaying solution of ``Delta v = g`` on the rings of ``g``.

    Returns a :class:`PoissonResult`, which unpacks as ``(v, certificate)``.
    ``residual`` is the largest relative mode-ODE residual over interior rings.
    """
    if kmax is None:
        kmax = g.thetas.size // 2 - 1
    projections = project_modes(g, kmax)
    scale = max(float(np.max(np.abs(b.coeffs))) for b in projections)
    modes, worst = [], 0.0
    for b in projections:
        sol = ModeSolution(b.k, b.radii, b.coeffs, k1, k2, convention=convention, scale=scale)
        modes.append(sol.series(b.m))
        if not sol.zero:
            worst = max(worst, float(np.max(mode_residual(sol), initial=0.0)))
    values = synthesize(modes, g.thetas)
    v = RingSamples(g.radii, g.thetas, values, "scalar")
    cert = certify_decay(g.radii, np.max(np.abs(values), axis=1), k1, k2)
    cert.extra["mode_residual"] = worst
    cert.extra["convention"] = convention
    return PoissonResult(v, cert, modes, worst)


class ModeProjector(TransformerMixin, BaseEstimator):
    """Ring samples to Fourier mode coefficients, scikit-learn style.

    ``transform`` takes an array of shape (n_rings, n_theta) and returns
    (n_rings, 2 kmax + 1) coefficients ordered ``(0,1), (1,1), (1,2), ...``.
    """

    def __init__(self, kmax=8):
        self.kmax = kmax

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        n_theta = check_n_theta(X.shape[1], minimum=2)
        if self.kmax >= n_theta // 2:
            raise Aliasing(f"kmax={self.kmax} needs n_theta > {2 * self.kmax}")
        self.n_theta_ = n_theta
        self.thetas_ = angle_grid(n_theta)
        self.basis_ = np.stack([basis_function(k, m, self.thetas_)
                                for k, m in _mode_order(self.kmax)], axis=-1)
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_theta_:
            raise ValueError(f"expected shape (n, {self.n_theta_}), got {X.shape}")
        return (2 * math.pi / self.n_theta_) * X @ self.basis_

    def inverse_transform(self, C):
        check_is_fitted(self)
        return np.asarray(C, dtype=float) @ self.basis_.T
