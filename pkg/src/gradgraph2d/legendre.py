"""Transforms linking the F_tau branches to Monge-Ampere and special Lagrangian.

* ``legendre_dual``: for tau in (0, pi/4), ``u_bar = u + (a+b)|x|^2/2`` is
  uniformly convex and ``u_tilde = |x~|^2/2 - 2b v`` (``v`` the Legendre
  transform of ``u_bar``) has Hessian eigenvalues ``(l+a-b)/(l+a+b)``.
* ``rotate_large_tau``: for tau in (pi/4, pi/2), ``v = u/b + a|x|^2/(2b)``
  solves a special Lagrangian equation.
* ``three_term_reduce``: the Legendre transform of ``u + (c1/c2)|x|^2/2``
  solves ``det D^2 = c2^2/(c1^2 - c0 c2)``.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_points
from .exceptions import ConvexityMargin, DomainViolation, InversionFailure
from .expansion import ExpansionCoeffs
from .operators import (Branch, GeneralCoeffs, eigen_sym2, general_normalize, q_matrix,
                        tau_params)
from .solutions import ExteriorSolution

__all__ = ["MapKind", "DualPair", "legendre_dual", "rotate_large_tau", "three_term_reduce"]

_MARGIN = 1e-6


class MapKind(str, enum.Enum):
    LEGENDRE_SMALL_TAU = "LegendreSmallTau"
    ROTATION_LARGE_TAU = "RotationLargeTau"
    THREE_TERM = "ThreeTerm"


@dataclass
class DualPair:
    """A primal solution, its transform and the bookkeeping that links them.

    ``shift`` is the Hessian shift added before the transform and ``scale`` the
    factor ``2b`` (``1/b`` for the rotation, 1 for the three-term reduction).
    ``forward`` maps primal points to dual points, ``inverse`` the other way.
    """

    primal: ExteriorSolution
    dual: ExteriorSolution
    shift: float
    scale: float
    map_kind: MapKind
    forward: object = None
    inverse: object = None
    negated: bool = False
    dual_constant: float | None = None
    metadata: dict = field(default_factory=dict)


def _probe_radii(sol, n=24):
    lo = max(sol.r_min, 1e-3)
    hi = min(sol.r_max, 1e4 * max(lo, 1.0))
    return np.geomspace(lo, hi, n)


def _probe_points(sol, n_rings=24, n_theta=32):
    th = 2 * np.pi * (np.arange(n_theta) + 0.5) / n_theta
    ring = np.stack([np.cos(th), np.sin(th)], axis=-1)
    return sol.center + _probe_radii(sol, n_rings)[:, None, None] * ring[None]


def _hessian_margin(sol, bound, sign=1.0):
    """Smallest ``lambda_min(sign * D^2u) - bound`` over probe points."""
    lo, _, _ = eigen_sym2(sign * sol.hessian(_probe_points(sol)))
    return float(np.min(lo - bound))


class _GradientMap:
    """``x -> D u_bar(x)`` with ``u_bar = sign * u + shift |x|^2 / 2``, and its inverse."""

    def __init__(self, sol, sign, shift, tol=1e-12, max_iter=60):
        self.sol = sol
        self.sign = float(sign)
        self.shift = float(shift)
        self.M = self.sign * sol.a_ref + self.shift * np.eye(2)
        self.Minv = np.linalg.inv(self.M)
        self.tol = tol
        self.max_iter = max_iter
        beta = None if sol.truth is None else sol.truth.beta
        self.beta = np.zeros(2) if beta is None else self.sign * beta

    def _eval(self, X):
        dev, grad, hess = self.sol._evaluate(X)
        dev_bar = self.sign * dev
        g = self.sign * (grad - X @ self.sol.a_ref)
        grad_bar = X @ self.M + g
        hess_bar = self.sign * hess + self.shift * np.eye(2)
        return dev_bar, g, grad_bar, hess_bar

    def forward(self, X):
        X = self.sol.check_domain(X)
        return self._eval(X)[2]

    def _inside(self, X):
        dist = np.linalg.norm(X - self.sol.center, axis=-1)
        return (dist >= self.sol.r_min) & (dist > 0) & (dist <= self.sol.r_max)

    def inverse(self, Xt):
        """Damped Newton on ``D u_bar(x) = x~`` with the analytic Jacobian."""
        Xt = check_points(Xt)
        shape = Xt.shape
        Xt = Xt.reshape(-1, 2)
        X = (Xt - self.beta) @ self.Minv.T
        bad = ~self._inside(X)
        if np.any(bad):
            # fall back to the nearest admissible point on the same ray
            dist = np.linalg.norm(X[bad] - self.sol.center, axis=-1)
            target = np.clip(dist, self.sol.r_min * (1 + 1e-9) + 1e-300, self.sol.r_max)
            X[bad] = self.sol.center + (X[bad] - self.sol.center) * (target / np.maximum(dist, 1e-300))[:, None]
        scale = 1.0 + np.linalg.norm(Xt, axis=-1)
        _, _, G, J = self._eval(X)
        res = G - Xt
        norm = np.linalg.norm(res, axis=-1)
        floor = 1e3 * np.finfo(float).eps
        for _ in range(self.max_iter):
            active = norm > self.tol * scale
            if not np.any(active):
                break
            step = np.linalg.solve(J[active], res[active][..., None])[..., 0]
            t = np.ones(step.shape[0])
            x_act = X[active]
            n_act = norm[active]
            done = np.zeros(step.shape[0], dtype=bool)
            for _ in range(40):
                trial = x_act - t[:, None] * step
                ok = self._inside(trial)
                cand = np.where(ok[:, None], trial, x_act)
                _, _, Gc, Jc = self._eval(cand)
                rc = np.linalg.norm(Gc - Xt[active], axis=-1)
                accept = ok & (rc < n_act) & ~done
                if np.any(accept):
                    idx = np.flatnonzero(active)[accept]
                    X[idx] = cand[accept]
                    res[idx] = (Gc - Xt[active])[accept]
                    norm[idx] = rc[accept]
                    J[idx] = Jc[accept]
                    done |= accept
                if np.all(done):
                    break
                t = np.where(done, t, 0.5 * t)
            if not np.any(done):
                # no strict decrease possible: residual is at rounding level
                if np.all(norm[active] <= floor * scale[active]):
                    break
                raise InversionFailure(
                    f"Newton stalled with residual {float(np.max(norm[active] / scale[active]))}")
        else:
            if np.any(norm > max(self.tol, floor) * scale):
                raise InversionFailure("Newton did not converge")
        return X.reshape(shape)

    def legendre(self, Xt):
        """Legendre transform ``v`` of ``u_bar`` at ``Xt``, split against ``M^{-1}``.

        With ``g = D u_bar - M x`` one has
        ``v = x~^T M^{-1} x~ / 2 - g^T M^{-1} g / 2 - dev(u_bar)``.
        Returns ``(dev_v, Dv, D^2v, x)``.
        """
        X = self.inverse(Xt)
        dev_bar, g, _, hess_bar = self._eval(X)
        dev_v = -0.5 * np.einsum("...i,ij,...j->...", g, self.Minv, g) - dev_bar
        return dev_v, X, np.linalg.inv(hess_bar), X

    def image_bounds(self, n=512):
        th = 2 * np.pi * np.arange(n) / n
        ring = np.stack([np.cos(th), np.sin(th)], axis=-1)
        r_in = max(self.sol.r_min, 1e-6)
        inner = np.linalg.norm(self._eval(self.sol.center + r_in * ring)[2], axis=-1)
        r_min = float(np.max(inner)) * (1 + 1e-9)
        r_max = math.inf
        if math.isfinite(self.sol.r_max):
            outer = np.linalg.norm(self._eval(self.sol.center + self.sol.r_max * ring)[2], axis=-1)
            r_max = float(np.min(outer)) * (1 - 1e-9)
        return r_min, r_max


def legendre_dual(sol, p):
    """Partial Legendre dual of a solution on the (0, pi/4) branch.

    The dual is a tau = 0 solution with ``C0 = b C0 / sqrt(a^2 + 1)``, so
    ``sum ln(lambda~) = 2 b C0 / sqrt(a^2 + 1)``.
    """
    p = tau_params(p)
    if p.branch is not Branch.LOG_QUOTIENT:
        raise ValueError("legendre_dual needs tau in (0, pi/4)")
    if _hessian_margin(sol, -p.a + p.b) < _MARGIN:
        raise ConvexityMargin(f"Hessian not above {-p.a + p.b} + {_MARGIN}")
    gmap = _GradientMap(sol, 1.0, p.a + p.b)
    b2 = 2.0 * p.b
    a_ref = np.eye(2) - b2 * gmap.Minv

    def evaluate(Xt):
        dev_v, Dv, D2v, _ = gmap.legendre(Xt)
        grad = Xt - b2 * Dv
        return -b2 * dev_v, grad, np.eye(2) - b2 * D2v

    C0_dual = p.b * sol.C0 * p.sin
    truth = None
    if sol.truth is not None and sol.truth.A is not None:
        Minv = np.linalg.inv(sol.truth.A + (p.a + p.b) * np.eye(2))
        A = np.eye(2) - b2 * Minv
        beta = None if sol.truth.beta is None else b2 * Minv @ sol.truth.beta
        truth = ExpansionCoeffs(A=A, beta=beta, Q=q_matrix(0.0, A))
    r_min, r_max = gmap.image_bounds()
    dual = ExteriorSolution(evaluate, r_min=r_min, r_max=r_max, tau=0.0, C0=C0_dual,
                            truth=truth, a_ref=a_ref)
    return DualPair(sol, dual, p.a + p.b, b2, MapKind.LEGENDRE_SMALL_TAU,
                    forward=gmap.forward, inverse=gmap.inverse,
                    dual_constant=2.0 * C0_dual,
                    metadata={"tau": p.tau, "a": p.a, "b": p.b})


def rotate_large_tau(sol, p):
    """``v = u/b + a|x|^2/(2b)``, a special Lagrangian solution with constant ``b C0 sin(tau) + pi/2``."""
    p = tau_params(p)
    if p.branch is not Branch.ARCTAN_QUOTIENT:
        raise ValueError("rotate_large_tau needs tau in (pi/4, pi/2)")
    if _hessian_margin(sol, -(p.a + p.b)) < _MARGIN:
        raise ConvexityMargin(f"Hessian not above {-(p.a + p.b)} + {_MARGIN}")
    a, b = p.a, p.b
    a_ref = (sol.a_ref + a * np.eye(2)) / b

    def evaluate(X):
        dev, grad, hess = sol._evaluate(X)
        return dev / b, (grad + a * X) / b, (hess + a * np.eye(2)) / b

    truth = None
    t = sol.truth
    if t is not None:
        A = None if t.A is None else (t.A + a * np.eye(2)) / b
        # Q_u = sin(tau) b^2 Q_v, so the log and d1/d2 terms are rescaled
        ratio = p.sin * b * b
        gamma = None
        if t.gamma is not None and t.d is not None:
            gamma = (t.gamma + t.d * math.log(ratio)) / b
        truth = ExpansionCoeffs(
            A=A,
            beta=None if t.beta is None else t.beta / b,
            gamma=gamma,
            d=None if t.d is None else t.d / b,
            d1=None if t.d1 is None else t.d1 / (b * math.sqrt(ratio)),
            d2=None if t.d2 is None else t.d2 / (b * math.sqrt(ratio)),
            Q=None if A is None else q_matrix(math.pi / 2, A),
        )
    desc = None
    if sol.descriptor is not None:
        desc = {"family": "rotate_large_tau", "base": sol.descriptor, "tau": p.tau}
    return ExteriorSolution(evaluate, r_min=sol.r_min, r_max=sol.r_max, center=sol.center,
                            tau=math.pi / 2, C0=b * sol.C0 * p.sin + math.pi / 2,
                            truth=truth, a_ref=a_ref, descriptor=desc)


def three_term_reduce(sol, g):
    """Legendre transform of ``sign * u + shift |x|^2 / 2`` for the three-term equation.

    ``shift = c1/c2`` after normalising to ``c2 > 0``.  When ``D^2u`` is not
    above ``-shift`` the negated solution is used, which solves the equation
    with ``c1 -> -c1``; ``DualPair.negated`` records this.
    """
    if not isinstance(g, GeneralCoeffs):
        g = GeneralCoeffs(*map(float, g))
    if g.c2 < 0:
        g = GeneralCoeffs(-g.c0, -g.c1, -g.c2)
    shift, product = general_normalize(g)
    sign = 1.0
    if _hessian_margin(sol, -shift) < _MARGIN:
        sign = -1.0
        if _hessian_margin(sol, shift, sign=-1.0) < _MARGIN:
            raise ConvexityMargin("neither u nor -u has Hessian above the required shift")
        shift = -shift
    gmap = _GradientMap(sol, sign, shift)

    def evaluate(Xt):
        dev_v, Dv, D2v, _ = gmap.legendre(Xt)
        return dev_v, Dv, D2v

    truth = None
    if sol.truth is not None and sol.truth.A is not None:
        A = np.linalg.inv(sign * sol.truth.A + shift * np.eye(2))
        beta = None if sol.truth.beta is None else -sign * A @ sol.truth.beta
        truth = ExpansionCoeffs(A=A, beta=beta, Q=q_matrix(0.0, A))
    r_min, r_max = gmap.image_bounds()
    det = 1.0 / product
    dual = ExteriorSolution(evaluate, r_min=r_min, r_max=r_max, tau=0.0, C0=0.5 * math.log(det),
                            truth=truth, a_ref=gmap.Minv)
    if not np.isfinite(r_min):
        raise DomainViolation("dual domain is unbounded")
    return DualPair(sol, dual, shift, 1.0, MapKind.THREE_TERM, forward=gmap.forward,
                    inverse=gmap.inverse, negated=sign < 0, dual_constant=det,
                    metadata={"c0": g.c0, "c1": g.c1, "c2": g.c2})
