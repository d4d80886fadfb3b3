"""Ground-truth exterior solutions with analytic derivatives and coefficients.

Every solution evaluates as ``u(x) = x^T A_ref x / 2 + dev(x)`` where ``A_ref``
is a fixed reference matrix and ``dev`` is computed without cancellation.  The
split lets residuals against the expansion stay accurate at ``|x| ~ 1e4``.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from ._validation import angle_grid, check_n_theta, check_points, check_radii, check_sym2
from .exceptions import (AdmissibilityLost, DomainViolation, InadmissibleEigenvalues,
                         NoAdmissiblePartner, RangeExceeded)
from .expansion import ExpansionCoeffs, sqrtm_sym2
from .operators import (GeneralCoeffs, eigen_sym2, f_tau, general_normalize,
                        isotropic_eigenvalue, partner_deviation, q_matrix,
                        solve_partner_eigenvalue, tau_params, three_term_residual)

__all__ = [
    "ExteriorSolution",
    "AffineFrame",
    "RadialProfile",
    "RingSamples",
    "RingBundle",
    "quadratic",
    "ma_radial_exact",
    "sl_radial_exact",
    "radial_ode_solve",
    "radial_ode_solution",
    "three_term_radial",
    "perturbed",
    "transform",
    "sample_rings",
    "solution_from_descriptor",
    "rotation",
]


def rotation(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


class ExteriorSolution:
    """An evaluable solution on ``{x : |x - center| >= r_min}``.

    Parameters
    ----------
    evaluate : callable
        Maps points of shape (..., 2) to ``(dev, gradient, hessian)`` with the
        value equal to ``x^T a_ref x / 2 + dev``.
    r_min, center : excluded disk (``r_min = 0`` means only ``center`` is excluded).
    tau, C0 : the equation the solution satisfies; ``general`` replaces them for
        the three-term equation.
    truth : known expansion coefficients, possibly partial.
    descriptor : JSON-able dict that rebuilds the solution.
    """

    def __init__(self, evaluate, *, r_min=0.0, center=(0.0, 0.0), tau=None, C0=None,
                 general=None, truth=None, a_ref=None, descriptor=None, r_max=math.inf):
        self._evaluate = evaluate
        self.r_min = float(r_min)
        self.r_max = float(r_max)
        self.center = np.asarray(center, dtype=float).reshape(2)
        self.tau = None if tau is None else tau_params(tau)
        self.C0 = None if C0 is None else float(C0)
        self.general = general
        self.truth = truth
        self.a_ref = np.zeros((2, 2)) if a_ref is None else check_sym2(a_ref)
        self.descriptor = descriptor

    def __repr__(self):
        family = (self.descriptor or {}).get("family", "custom")
        return f"ExteriorSolution(family={family!r}, r_min={self.r_min})"

    def contains(self, X):
        X = check_points(X)
        dist = np.linalg.norm(X - self.center, axis=-1)
        # rounding slack so that points built as r * (cos, sin) on the boundary count
        slack = 1e-12
        inside = dist > 0 if self.r_min == 0 else dist >= self.r_min * (1 - slack)
        return inside & (dist <= self.r_max * (1 + slack))

    def check_domain(self, X):
        X = check_points(X)
        if not np.all(self.contains(X)):
            raise DomainViolation(
                f"points outside the domain |x - {self.center.tolist()}| in "
                f"[{self.r_min}, {self.r_max}]")
        return X

    def evaluate_split(self, X):
        X = self.check_domain(X)
        return self._evaluate(X)

    def evaluate(self, X):
        X = self.check_domain(X)
        dev, grad, hess = self._evaluate(X)
        quad = 0.5 * np.einsum("...i,ij,...j->...", X, self.a_ref, X)
        return quad + dev, grad, hess

    def value(self, X):
        return self.evaluate(X)[0]

    def deviation(self, X):
        return self.evaluate_split(X)[0]

    def gradient(self, X):
        return self.evaluate_split(X)[1]

    def hessian(self, X):
        return self.evaluate_split(X)[2]

    def residual(self, X):
        """Pointwise equation residual ``F_tau(lambda(D^2u)) - C0``."""
        l1, l2, _ = eigen_sym2(self.hessian(X))
        if self.general is not None:
            return three_term_residual(self.general, l1, l2)
        if self.tau is None:
            raise ValueError("solution carries no equation")
        return f_tau(self.tau, l1, l2) - self.C0

    def to_json(self):
        if self.descriptor is None:
            raise ValueError("solution has no descriptor")
        return json.dumps(self.descriptor, sort_keys=True)


def _ellipse_radial(profile, kappa, M=None):
    """Evaluator for ``u(x) = Phi(|M x|)`` with ``Phi(t) = kappa t^2 / 2 + dev(t)``.

    ``profile(t)`` returns ``(dev, Phi', Phi'')``.
    """
    M = np.eye(2) if M is None else np.asarray(M, dtype=float)

    def evaluate(X):
        Y = X @ M.T
        t = np.linalg.norm(Y, axis=-1)
        dev, dphi, ddphi = profile(t)
        yhat = Y / t[..., None]
        grad_y = dphi[..., None] * yhat
        outer = yhat[..., :, None] * yhat[..., None, :]
        hess_y = ddphi[..., None, None] * outer + (dphi / t)[..., None, None] * (np.eye(2) - outer)
        grad = grad_y @ M
        hess = M.T @ hess_y @ M
        return dev, grad, hess

    return evaluate, kappa * (M.T @ M)


def _sqrt_profile(k, c1):
    """Profile with ``Phi'(t) = sqrt(k^2 t^2 + c1)`` and ``Phi(0) = 0``."""

    def profile(t):
        p = np.sqrt(k * k * t * t + c1)
        ddphi = k * k * t / p
        if c1 == 0:
            dev = np.zeros_like(t)
        else:
            dev = 0.5 * t * c1 / (p + k * t) + (c1 / (2 * k)) * np.arcsinh(k * t / math.sqrt(c1))
        return dev, p, ddphi

    return profile


def _sqrt_profile_constants(k, c1):
    """Constant term and log coefficient of ``int_0^t sqrt(k^2 s^2 + c1) ds`` at infinity."""
    if c1 == 0:
        return 0.0, 0.0
    const = c1 / (4 * k) + (c1 / (2 * k)) * (math.log(2 * k) - 0.5 * math.log(c1))
    return const, c1 / (2 * k)


def _unit_shape(shape):
    if shape is None:
        return None, np.eye(2)
    S = check_sym2(shape)
    det = float(np.linalg.det(S))
    if det <= 0 or np.any(np.linalg.eigvalsh(S) <= 0):
        raise ValueError("shape must be positive definite")
    S = S / math.sqrt(det)
    return S, sqrtm_sym2(S)


def ma_radial_exact(C0, c1, shape=None, variant="consistent"):
    """Radially symmetric Monge-Ampere solutions on the punctured plane.

    ``variant="consistent"`` uses ``U'(r) = sqrt(e^{2 C0} r^2 + c1)``, which gives
    ``det D^2u = e^{2 C0}`` exactly.  ``"printed"`` is the family
    ``e^{C0} int_0^{(x^T A x)^{1/2}} sqrt(r^2 + c1) dr`` with ``det A = e^{2 C0}``
    (its Hessian determinant is ``e^{4 C0}``); ``"no_prefactor"`` drops the
    ``e^{C0}`` factor, which is the consistent family with ``c1 -> e^{C0} c1``.
    ``shape`` (positive definite, normalised to unit determinant) composes with
    ``x -> shape^{1/2} x``, which keeps the determinant.
    """
    C0, c1 = float(C0), float(c1)
    if c1 < 0:
        raise ValueError("c1 must be nonnegative")
    S, M = _unit_shape(shape)
    k = math.exp(C0)
    descriptor = {"family": "ma_radial_exact", "C0": C0, "c1": c1, "variant": variant,
                  "shape": None if S is None else S.tolist()}
    if variant == "no_prefactor":
        sol = ma_radial_exact(C0, k * c1, shape=S)
        sol.descriptor = descriptor
        return sol
    if variant == "consistent":
        evaluate, a_ref = _ellipse_radial(_sqrt_profile(k, c1), k, M)
        const, logc = _sqrt_profile_constants(k, c1)
        d = logc / 2
        A = k * (M.T @ M)
        truth = ExpansionCoeffs(A=A, beta=np.zeros(2), gamma=const - d * math.log(k), d=d,
                                d1=0.0, d2=0.0, Q=q_matrix(0.0, A))
    elif variant == "printed":
        base = _sqrt_profile(1.0, c1)
        sk = math.sqrt(k)

        def profile(t):
            dev, p, ddp = base(sk * t)
            return k * dev, k * sk * p, k * k * ddp

        evaluate, a_ref = _ellipse_radial(profile, k * k, M)
        truth = None
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return ExteriorSolution(evaluate, tau=0.0, C0=C0, truth=truth, a_ref=a_ref,
                            descriptor=descriptor)


def sl_radial_exact(c1):
    """Special Lagrangian solution (tau = pi/2, C0 = pi/2) with ``U' = sqrt(r^2 + c1)``.

    ``arctan U'' + arctan(U'/r) = pi/2`` is equivalent to ``U'' U'/r = 1``.
    """
    c1 = float(c1)
    if c1 < 0:
        raise ValueError("c1 must be nonnegative")
    evaluate, a_ref = _ellipse_radial(_sqrt_profile(1.0, c1), 1.0)
    const, logc = _sqrt_profile_constants(1.0, c1)
    A = np.eye(2)
    truth = ExpansionCoeffs(A=A, beta=np.zeros(2), gamma=const, d=logc / 2, d1=0.0, d2=0.0,
                            Q=q_matrix(math.pi / 2, A))
    return ExteriorSolution(evaluate, tau=math.pi / 2, C0=math.pi / 2, truth=truth, a_ref=a_ref,
                            descriptor={"family": "sl_radial_exact", "c1": c1})


def quadratic(A, beta=(0.0, 0.0), gamma=0.0, tau=None):
    """``x^T A x / 2 + beta.x + gamma``; solves ``F_tau = F_tau(lambda(A))`` when ``tau`` is given."""
    A = check_sym2(A)
    beta = np.asarray(beta, dtype=float).reshape(2)
    gamma = float(gamma)
    C0 = Q = None
    if tau is not None:
        l1, l2, _ = eigen_sym2(A)
        C0 = float(f_tau(tau, l1, l2))
        Q = q_matrix(tau, A)

    def evaluate(X):
        dev = X @ beta + gamma
        grad = X @ A + beta
        hess = np.broadcast_to(A, X.shape[:-1] + (2, 2)).copy()
        return dev, grad, hess

    truth = ExpansionCoeffs(A=A, beta=beta, gamma=gamma, d=0.0, d1=0.0, d2=0.0, Q=Q)
    return ExteriorSolution(evaluate, tau=tau, C0=C0, truth=truth, a_ref=A,
                            descriptor={"family": "quadratic", "A": A.tolist(),
                                        "beta": beta.tolist(), "gamma": gamma, "tau": tau})


@dataclass
class RadialProfile:
    """Radial profile on the integrator's step grid with its dense interpolant."""

    r_grid: np.ndarray
    p: np.ndarray
    dp: np.ndarray
    U: np.ndarray
    tau: object
    C0: float
    kappa: float
    dense: object

    def solution(self, descriptor=None):
        """The profile as an :class:`ExteriorSolution` on ``r_grid[0] <= |x| <= r_grid[-1]``."""
        kappa, p_tau, C0, dense = self.kappa, self.tau, self.C0, self.dense

        def profile(t):
            q, V = dense(t.ravel())
            q, V = q.reshape(t.shape), V.reshape(t.shape)
            p = kappa * t + q
            dp = solve_partner_eigenvalue(p_tau, C0, p / t)
            return V, p, dp

        evaluate, a_ref = _ellipse_radial(profile, kappa)
        A = kappa * np.eye(2)
        truth = ExpansionCoeffs(A=A, beta=np.zeros(2), d1=0.0, d2=0.0, Q=q_matrix(p_tau, A))
        return ExteriorSolution(evaluate, r_min=self.r_grid[0], r_max=self.r_grid[-1],
                                tau=p_tau, C0=C0, truth=truth, a_ref=a_ref,
                                descriptor=descriptor)


def radial_ode_solve(p, C0, r0, p0, rmax, U0=0.0, rtol=1e-13, atol=1e-14):
    """Integrate the radial reduction ``F_tau(U'', U'/r) = C0`` from ``r0`` to ``rmax``.

    The state is the deviation from the isotropic limit ``kappa r`` where
    ``F_tau(kappa, kappa) = C0``: ``q = U' - kappa r`` and ``V = U - kappa r^2/2``.
    ``U''`` is never integrated; it is the closed-form partner of ``U'/r``,
    evaluated directly as a deviation from ``kappa`` to keep its relative accuracy.
    Integration uses an adaptive embedded Runge-Kutta 8(5,3) pair (DOP853).
    """
    p = tau_params(p)
    C0, r0, p0, rmax = float(C0), float(r0), float(p0), float(rmax)
    if not 0 < r0 < rmax:
        raise ValueError("need 0 < r0 < rmax")
    try:
        kappa = isotropic_eigenvalue(p, C0)
        solve_partner_eigenvalue(p, C0, p0 / r0)
    except (NoAdmissiblePartner, InadmissibleEigenvalues) as exc:
        raise RangeExceeded(f"C0={C0} is not attainable at U'/r={p0 / r0}: {exc}") from exc

    def rhs(r, y):
        try:
            dq = partner_deviation(p, C0, kappa, y[0] / r)
        except (NoAdmissiblePartner, InadmissibleEigenvalues) as exc:
            raise AdmissibilityLost(f"admissibility lost at r={r}: {exc}") from exc
        return np.array([float(dq), y[0]])

    y0 = np.array([p0 - kappa * r0, U0 - 0.5 * kappa * r0 * r0])
    out = solve_ivp(rhs, (r0, rmax), y0, method="DOP853", rtol=rtol, atol=atol,
                    dense_output=True)
    if not out.success:
        raise AdmissibilityLost(out.message)
    r = out.t
    q, V = out.y
    pp = kappa * r + q
    dp = solve_partner_eigenvalue(p, C0, pp / r)
    U = V + 0.5 * kappa * r * r
    return RadialProfile(r, pp, dp, U, p, C0, kappa, out.sol)


def radial_ode_solution(tau, C0, r0, p0, rmax, U0=0.0):
    """:func:`radial_ode_solve` wrapped as an :class:`ExteriorSolution`."""
    prof = radial_ode_solve(tau, C0, r0, p0, rmax, U0=U0)
    desc = {"family": "radial_ode", "tau": float(tau_params(tau).tau), "C0": float(C0),
            "r0": float(r0), "p0": float(p0), "rmax": float(rmax), "U0": float(U0)}
    return prof.solution(descriptor=desc)


def three_term_radial(g, c, negate=False):
    """Radial solution of ``c2 l1 l2 + c1 (l1 + l2) + c0 = 0``.

    Built as ``w - shift |x|^2 / 2`` where ``w`` is radial with
    ``det D^2 w = product``.  With ``negate`` the solution is ``-u`` for the
    coefficients ``(c0, -c1, c2)``, which solves ``g`` and is semi-concave.
    """
    g = GeneralCoeffs(*map(float, (g.c0, g.c1, g.c2))) if isinstance(g, GeneralCoeffs) \
        else GeneralCoeffs(*map(float, g))
    c = float(c)
    base_g = GeneralCoeffs(g.c0, -g.c1, g.c2) if negate else g
    shift, product = general_normalize(base_g)
    k = math.sqrt(product)
    base = _sqrt_profile(k, c)
    sign = -1.0 if negate else 1.0

    def profile(t):
        dev, dphi, ddphi = base(t)
        return sign * dev, sign * (dphi - shift * t), sign * (ddphi - shift)

    evaluate, a_ref = _ellipse_radial(profile, sign * (k - shift))
    const, logc = _sqrt_profile_constants(k, c)
    d = logc / 2
    truth = ExpansionCoeffs(A=sign * (k - shift) * np.eye(2), beta=np.zeros(2),
                            gamma=sign * (const - d * math.log(k)), d=sign * d, d1=0.0, d2=0.0,
                            Q=k * np.eye(2))
    return ExteriorSolution(evaluate, general=g, truth=truth, a_ref=a_ref,
                            descriptor={"family": "three_term_radial", "g": g.to_dict(),
                                        "c": c, "negate": bool(negate)})


def perturbed(sol, value, gradient, hessian, label="perturbation"):
    """Add an explicit smooth function to ``sol``; the result is generally not a solution."""

    def evaluate(X):
        dev, grad, hess = sol.evaluate_split(X)
        return dev + value(X), grad + gradient(X), hess + hessian(X)

    return ExteriorSolution(evaluate, r_min=sol.r_min, center=sol.center, r_max=sol.r_max,
                            tau=sol.tau, C0=sol.C0, general=sol.general, truth=None,
                            a_ref=sol.a_ref, descriptor=None)


@dataclass(frozen=True)
class AffineFrame:
    rotation_angle: float = 0.0
    x0: tuple = (0.0, 0.0)
    beta_add: tuple = (0.0, 0.0)
    gamma_add: float = 0.0

    def to_dict(self):
        return {"rotation_angle": float(self.rotation_angle), "x0": [float(v) for v in self.x0],
                "beta_add": [float(v) for v in self.beta_add], "gamma_add": float(self.gamma_add)}


def _transport_truth(truth, O, x0, beta_add, gamma_add):
    if truth is None:
        return None
    A = None if truth.A is None else O @ truth.A @ O.T
    Q = None if truth.Q is None else O @ truth.Q @ O.T
    beta = gamma = d1 = d2 = None
    if A is not None and truth.beta is not None:
        beta = -A @ x0 + O @ truth.beta + beta_add
        if truth.gamma is not None:
            gamma = truth.gamma + 0.5 * x0 @ A @ x0 - (O @ truth.beta) @ x0 + gamma_add
    if truth.d1 is not None and truth.d2 is not None and truth.d is not None and Q is not None:
        shifted = O @ np.array([truth.d1, truth.d2]) - 2.0 * truth.d * (sqrtm_sym2(Q) @ x0)
        d1, d2 = float(shifted[0]), float(shifted[1])
    return ExpansionCoeffs(A=A, beta=beta, gamma=gamma, d=truth.d, d1=d1, d2=d2, Q=Q)


def transform(sol, frame):
    """``x -> sol(O^T (x - x0)) + beta_add.x + gamma_add`` with truth coefficients transported."""
    O = rotation(frame.rotation_angle)
    x0 = np.asarray(frame.x0, dtype=float).reshape(2)
    beta_add = np.asarray(frame.beta_add, dtype=float).reshape(2)
    gamma_add = float(frame.gamma_add)
    if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(beta_add)) and math.isfinite(gamma_add)):
        raise DomainViolation("frame must be finite")
    a_ref = O @ sol.a_ref @ O.T
    a_ref = 0.5 * (a_ref + a_ref.T)
    shift_lin = -a_ref @ x0
    shift_const = 0.5 * x0 @ a_ref @ x0

    def evaluate(X):
        Y = (X - x0) @ O
        dev, grad, hess = sol._evaluate(Y)
        dev = dev + X @ (shift_lin + beta_add) + (shift_const + gamma_add)
        return dev, grad @ O.T + beta_add, O @ hess @ O.T

    desc = None
    if sol.descriptor is not None:
        desc = {"family": "transform", "base": sol.descriptor, "frame": frame.to_dict()}
    return ExteriorSolution(evaluate, r_min=sol.r_min, r_max=sol.r_max,
                            center=O @ sol.center + x0, tau=sol.tau, C0=sol.C0,
                            general=sol.general,
                            truth=_transport_truth(sol.truth, O, x0, beta_add, gamma_add),
                            a_ref=a_ref, descriptor=desc)


@dataclass
class RingSamples:
    """Samples on concentric circles: ``values[i, j, ...]`` at radius i, angle j."""

    radii: np.ndarray
    thetas: np.ndarray
    values: np.ndarray
    kind: str = "scalar"

    def __post_init__(self):
        self.radii = check_radii(self.radii)
        self.thetas = np.asarray(self.thetas, dtype=float)
        check_n_theta(self.thetas.size, minimum=2)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[:2] != (self.radii.size, self.thetas.size):
            raise ValueError("values must have shape (n_radii, n_theta, ...)")

    @property
    def points(self):
        return _ring_points(self.radii, self.thetas)

    def to_csv(self, path):
        from .report import write_rings_csv
        write_rings_csv(self, path)


@dataclass
class RingBundle:
    value: RingSamples
    gradient: RingSamples
    hessian: RingSamples


def _ring_points(radii, thetas):
    return radii[:, None, None] * np.stack([np.cos(thetas), np.sin(thetas)], axis=-1)[None]


def sample_rings(sol, radii, n_theta):
    """Value, gradient and Hessian of ``sol`` on origin-centred rings."""
    radii = check_radii(radii)
    n_theta = check_n_theta(n_theta)
    thetas = angle_grid(n_theta)
    X = sol.check_domain(_ring_points(radii, thetas))
    value, grad, hess = sol.evaluate(X)
    return RingBundle(RingSamples(radii, thetas, value, "scalar"),
                      RingSamples(radii, thetas, grad, "gradient"),
                      RingSamples(radii, thetas, hess, "hessian"))


def solution_from_descriptor(desc):
    """Rebuild a solution from its JSON descriptor (dict or JSON string)."""
    if isinstance(desc, str):
        desc = json.loads(desc)
    family = desc.get("family")
    if family == "ma_radial_exact":
        return ma_radial_exact(desc["C0"], desc["c1"], shape=desc.get("shape"),
                               variant=desc.get("variant", "consistent"))
    if family == "sl_radial_exact":
        return sl_radial_exact(desc["c1"])
    if family == "quadratic":
        return quadratic(desc["A"], desc.get("beta", (0.0, 0.0)), desc.get("gamma", 0.0),
                         tau=desc.get("tau"))
    if family == "radial_ode":
        return radial_ode_solution(desc["tau"], desc["C0"], desc["r0"], desc["p0"],
                                   desc["rmax"], U0=desc.get("U0", 0.0))
    if family == "three_term_radial":
        g = desc["g"]
        return three_term_radial(GeneralCoeffs(g["c0"], g["c1"], g["c2"]), desc["c"],
                                 negate=desc.get("negate", False))
    if family == "transform":
        f = desc["frame"]
        frame = AffineFrame(f.get("rotation_angle", 0.0), tuple(f.get("x0", (0.0, 0.0))),
                            tuple(f.get("beta_add", (0.0, 0.0))), f.get("gamma_add", 0.0))
        return transform(solution_from_descriptor(desc["base"]), frame)
    if family == "rotate_large_tau":
        from .legendre import rotate_large_tau
        return rotate_large_tau(solution_from_descriptor(desc["base"]), desc["tau"])
    raise ValueError(f"unknown solution family {family!r}")
