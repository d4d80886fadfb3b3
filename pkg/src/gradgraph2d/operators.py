"""The F_tau operator family on eigenvalue pairs and 2x2 symmetric linear algebra.

Every function is vectorised over leading axes: eigenvalue arguments broadcast
against each other and matrix arguments may be stacks of shape (..., 2, 2).
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_sym2
from .exceptions import InadmissibleEigenvalues, NoAdmissiblePartner, StructureViolation

__all__ = [
    "Branch",
    "TauParams",
    "Sym2",
    "Admissibility",
    "GeneralCoeffs",
    "tau_params",
    "admissibility",
    "eigen_sym2",
    "sym2_from_eigen",
    "f_single",
    "f_tau",
    "df_tau",
    "df_matrix",
    "q_matrix",
    "solve_partner_eigenvalue",
    "isotropic_eigenvalue",
    "f_increment",
    "f_increment_inverse",
    "partner_deviation",
    "arctan_identity_gap",
    "general_normalize",
    "three_term_residual",
    "q_matrix_general",
    "general_shift_sign",
]

_SNAP = 1e-14


class Branch(str, enum.Enum):
    MA = "MA"
    LOG_QUOTIENT = "LogQuotient"
    INVERSE_HARMONIC = "InverseHarmonic"
    ARCTAN_QUOTIENT = "ArctanQuotient"
    SPECIAL_LAGRANGIAN = "SpecialLagrangian"


@dataclass(frozen=True)
class TauParams:
    """Branch descriptor for one value of tau.

    At tau = 0 the parameters ``a`` and ``b`` are stored as ``inf`` and never read.
    ``sin`` and ``cos`` are snapped to exact values at the three special angles.
    """

    tau: float
    a: float
    b: float
    branch: Branch
    sin: float
    cos: float

    def to_dict(self):
        return {"tau": self.tau}


def tau_params(tau):
    """Build :class:`TauParams` for ``tau`` in [0, pi/2]."""
    if isinstance(tau, TauParams):
        return tau
    tau = float(tau)
    if not -_SNAP <= tau <= math.pi / 2 + _SNAP:
        raise ValueError(f"tau must lie in [0, pi/2], got {tau}")
    if abs(tau) <= _SNAP:
        return TauParams(0.0, math.inf, math.inf, Branch.MA, 0.0, 1.0)
    if abs(tau - math.pi / 4) <= _SNAP:
        r = math.sqrt(0.5)
        return TauParams(math.pi / 4, 1.0, 0.0, Branch.INVERSE_HARMONIC, r, r)
    if abs(tau - math.pi / 2) <= _SNAP:
        return TauParams(math.pi / 2, 0.0, 1.0, Branch.SPECIAL_LAGRANGIAN, 1.0, 0.0)
    s, c = math.sin(tau), math.cos(tau)
    a = c / s
    b = math.sqrt(abs(a * a - 1.0))
    branch = Branch.LOG_QUOTIENT if tau < math.pi / 4 else Branch.ARCTAN_QUOTIENT
    return TauParams(tau, a, b, branch, s, c)


@dataclass(frozen=True)
class Admissibility:
    lower_bound: float | None
    c0_nonzero_required: bool


def admissibility(p):
    """Eigenvalue lower bound of the semi-convex condition for the branch of ``p``."""
    p = tau_params(p)
    if p.branch is Branch.MA:
        return Admissibility(0.0, False)
    if p.branch is Branch.LOG_QUOTIENT:
        return Admissibility(-p.a + p.b, False)
    if p.branch is Branch.INVERSE_HARMONIC:
        return Admissibility(-1.0, False)
    if p.branch is Branch.ARCTAN_QUOTIENT:
        return Admissibility(-(p.a + p.b), False)
    return Admissibility(None, True)


def _check_admissible(p, lam):
    lam = np.asarray(lam, dtype=float)
    bound = admissibility(p).lower_bound
    if not np.all(np.isfinite(lam)):
        raise InadmissibleEigenvalues("non-finite eigenvalue")
    if bound is not None and np.any(lam <= bound):
        worst = float(np.min(lam))
        raise InadmissibleEigenvalues(
            f"eigenvalue {worst} not above the {p.branch.value} bound {bound}")
    return lam


@dataclass(frozen=True)
class Sym2:
    """A 2x2 real symmetric matrix stored by its three independent entries."""

    m11: float
    m12: float
    m22: float

    @classmethod
    def from_array(cls, M):
        M = check_sym2(M)
        return cls(float(M[0, 0]), float(M[0, 1]), float(M[1, 1]))

    @property
    def array(self):
        return np.array([[self.m11, self.m12], [self.m12, self.m22]])

    def __array__(self, dtype=None, copy=None):
        return self.array if dtype is None else self.array.astype(dtype)

    def eigen(self):
        l1, l2, ang = eigen_sym2(self.array)
        return float(l1), float(l2), float(ang)

    def to_list(self):
        return [self.m11, self.m12, self.m22]


def eigen_sym2(M):
    """Closed-form eigen-decomposition of symmetric 2x2 matrices.

    Returns ``(lambda1, lambda2, angle)`` with ``lambda1 <= lambda2``; ``angle``
    is the direction of the eigenvector of ``lambda2``, so that
    ``M = lambda2 v v^T + lambda1 w w^T`` with ``v = (cos, sin)`` and ``w``
    its rotation by +pi/2.  Equal eigenvalues give ``angle = 0``.
    """
    M = check_sym2(M)
    a, b, c = M[..., 0, 0], M[..., 0, 1], M[..., 1, 1]
    mean = 0.5 * (a + c)
    half = 0.5 * (a - c)
    rad = np.hypot(half, b)
    lo, hi = mean - rad, mean + rad
    det = a * c - b * b
    # the smaller-magnitude root loses digits by cancellation; recover it from det
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = np.where((mean > 0) & (hi != 0), det / np.where(hi != 0, hi, 1.0), lo)
        hi = np.where((mean < 0) & (lo != 0), det / np.where(lo != 0, lo, 1.0), hi)
    angle = 0.5 * np.arctan2(2.0 * b, a - c)
    angle = np.where(rad == 0, 0.0, angle)
    return lo, hi, angle


def sym2_from_eigen(lam1, lam2, angle):
    """Inverse of :func:`eigen_sym2`: ``lam2`` along ``angle``, ``lam1`` across it."""
    lam1, lam2, angle = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (lam1, lam2, angle)))
    c, s = np.cos(angle), np.sin(angle)
    out = np.empty(lam1.shape + (2, 2))
    out[..., 0, 0] = lam2 * c * c + lam1 * s * s
    out[..., 1, 1] = lam2 * s * s + lam1 * c * c
    out[..., 0, 1] = out[..., 1, 0] = (lam2 - lam1) * c * s
    return out


def f_single(p, lam):
    """One-eigenvalue term of F_tau; ``F_tau(l1, l2) = f_single(l1) + f_single(l2)``."""
    p = tau_params(p)
    lam = _check_admissible(p, lam)
    if p.branch is Branch.MA:
        return 0.5 * np.log(lam)
    if p.branch is Branch.LOG_QUOTIENT:
        return (1.0 / (2.0 * p.b * p.sin)) * np.log1p(-2.0 * p.b / (lam + p.a + p.b))
    if p.branch is Branch.INVERSE_HARMONIC:
        return -math.sqrt(2.0) / (1.0 + lam)
    if p.branch is Branch.ARCTAN_QUOTIENT:
        return (1.0 / (p.b * p.sin)) * np.arctan((lam + p.a - p.b) / (lam + p.a + p.b))
    return np.arctan(lam)


def f_tau(p, lambda1, lambda2):
    """F_tau evaluated on an eigenvalue pair."""
    return f_single(p, lambda1) + f_single(p, lambda2)


def df_tau(p, lam):
    """Derivative of :func:`f_single`, ``1 / (sin tau lam^2 + 2 cos tau lam + sin tau)``."""
    p = tau_params(p)
    lam = _check_admissible(p, lam)
    return 1.0 / (p.sin * lam * lam + 2.0 * p.cos * lam + p.sin)


def df_matrix(p, M):
    """Matrix derivative of ``F(M) = F_tau(lambda(M))``: df_tau on the eigenframe of ``M``."""
    l1, l2, ang = eigen_sym2(M)
    return sym2_from_eigen(df_tau(p, l1), df_tau(p, l2), ang)


def q_matrix(p, A):
    """Canonical Q = (sin tau A^2 + 2 cos tau A + sin tau I) / 2.

    This is half the inverse of :func:`df_matrix`, so ``Q @ DF(A) = I / 2``.
    """
    p = tau_params(p)
    is_sym2 = isinstance(A, Sym2)
    A = check_sym2(A)
    l1, l2, _ = eigen_sym2(A)
    _check_admissible(p, l1)
    Q = 0.5 * (p.sin * (A @ A) + 2.0 * p.cos * A + p.sin * np.eye(2))
    Q = 0.5 * (Q + np.swapaxes(Q, -1, -2))
    return Sym2.from_array(Q) if is_sym2 else Q


def _f_single_inverse(p, t):
    t = np.asarray(t, dtype=float)
    if p.branch is Branch.MA:
        return np.exp(2.0 * t)
    if p.branch is Branch.LOG_QUOTIENT:
        if np.any(t >= 0):
            raise NoAdmissiblePartner("log-quotient term must be negative")
        q = np.exp(2.0 * p.b * p.sin * t)
        return (q * (p.a + p.b) - p.a + p.b) / (1.0 - q)
    if p.branch is Branch.INVERSE_HARMONIC:
        if np.any(t >= 0):
            raise NoAdmissiblePartner("inverse-harmonic term must be negative")
        return -math.sqrt(2.0) / t - 1.0
    if p.branch is Branch.ARCTAN_QUOTIENT:
        scaled = p.b * p.sin * t
        if np.any(np.abs(scaled) >= math.pi / 4):
            raise NoAdmissiblePartner("arctan-quotient term outside (-pi/4, pi/4) after scaling")
        s = np.tan(scaled)
        return (s * (p.a + p.b) - p.a + p.b) / (1.0 - s)
    if np.any(np.abs(t) >= math.pi / 2):
        raise NoAdmissiblePartner("special Lagrangian term outside (-pi/2, pi/2)")
    return np.tan(t)


def solve_partner_eigenvalue(p, C0, lambda_known):
    """The eigenvalue ``lam`` with ``F_tau(lambda_known, lam) = C0`` (closed form)."""
    p = tau_params(p)
    t = C0 - f_single(p, lambda_known)
    lam = _f_single_inverse(p, t)
    bound = admissibility(p).lower_bound
    if bound is not None and np.any(lam <= bound):
        raise NoAdmissiblePartner(f"partner eigenvalue falls below {bound}")
    return lam


def isotropic_eigenvalue(p, C0):
    """The common eigenvalue ``lam`` with ``F_tau(lam, lam) = C0``."""
    p = tau_params(p)
    return float(_f_single_inverse(p, 0.5 * C0))


def f_increment(p, kappa, delta):
    """``f_single(kappa + delta) - f_single(kappa)`` without cancellation for small ``delta``."""
    p = tau_params(p)
    delta = np.asarray(delta, dtype=float)
    k = float(kappa)
    if p.branch is Branch.MA:
        return 0.5 * np.log1p(delta / k)
    if p.branch is Branch.LOG_QUOTIENT:
        m = k + p.a - p.b
        return np.log1p(2.0 * p.b * delta / (m * (k + delta + p.a + p.b))) / (2.0 * p.b * p.sin)
    if p.branch is Branch.INVERSE_HARMONIC:
        return math.sqrt(2.0) * delta / ((1.0 + k) * (1.0 + k + delta))
    if p.branch is Branch.ARCTAN_QUOTIENT:
        s = k + p.a
        return np.arctan(p.b * delta / (s * (s + delta) + p.b * p.b)) / (p.b * p.sin)
    return np.arctan(delta / (1.0 + k * (k + delta)))


def f_increment_inverse(p, kappa, t):
    """The ``delta`` with ``f_increment(p, kappa, delta) = t``."""
    p = tau_params(p)
    t = np.asarray(t, dtype=float)
    k = float(kappa)
    if p.branch is Branch.MA:
        return k * np.expm1(2.0 * t)
    if p.branch is Branch.LOG_QUOTIENT:
        m, n = k + p.a - p.b, k + p.a + p.b
        e = np.expm1(2.0 * p.b * p.sin * t)
        den = 2.0 * p.b - e * m
    elif p.branch is Branch.INVERSE_HARMONIC:
        e, n, m = t * (1.0 + k), 1.0 + k, 1.0
        den = math.sqrt(2.0) - e
    elif p.branch is Branch.ARCTAN_QUOTIENT:
        s = k + p.a
        scaled = p.b * p.sin * t
        if np.any(np.abs(scaled) >= math.pi / 2):
            raise NoAdmissiblePartner("arctan-quotient increment out of range")
        e, m, n = np.tan(scaled), s * s + p.b * p.b, 1.0
        den = p.b - e * s
    else:
        if np.any(np.abs(t) >= math.pi / 2):
            raise NoAdmissiblePartner("special Lagrangian increment out of range")
        e, m, n = np.tan(t), 1.0 + k * k, 1.0
        den = 1.0 - e * k
    if np.any(den <= 0):
        raise NoAdmissiblePartner("no admissible partner for this increment")
    return e * m * n / den


def partner_deviation(p, C0, kappa, delta):
    """``lam - kappa`` for the partner of ``kappa + delta``, with ``kappa`` the isotropic eigenvalue.

    Equivalent to ``solve_partner_eigenvalue(p, C0, kappa + delta) - kappa`` but
    accurate to relative rounding in the deviation itself, which matters when an
    integrator accumulates it over many decades of radius.
    """
    p = tau_params(p)
    delta = np.asarray(delta, dtype=float)
    bound = admissibility(p).lower_bound
    if bound is not None and np.any(kappa + delta <= bound):
        raise InadmissibleEigenvalues(f"eigenvalue at or below {bound}")
    out = f_increment_inverse(p, kappa, -f_increment(p, kappa, delta))
    if bound is not None and np.any(kappa + out <= bound):
        raise NoAdmissiblePartner(f"partner eigenvalue falls below {bound}")
    return out


def arctan_identity_gap(p, lambda1, lambda2=None):
    """Gap in the summed arctan identity of the (pi/4, pi/2) branch.

    Returns ``sum_i arctan((l_i+a-b)/(l_i+a+b)) - (sum_i arctan((l_i+a)/b) - pi/2)``.
    ``lambda2`` defaults to ``lambda1``.  The identity only holds for the sum
    over two eigenvalues; each single term carries ``-pi/4``.
    """
    p = tau_params(p)
    if p.branch is not Branch.ARCTAN_QUOTIENT:
        raise ValueError("arctan identity is stated for tau in (pi/4, pi/2)")
    lam1 = _check_admissible(p, lambda1)
    lam2 = lam1 if lambda2 is None else _check_admissible(p, lambda2)
    lhs = sum(np.arctan((lam + p.a - p.b) / (lam + p.a + p.b)) for lam in (lam1, lam2))
    rhs = sum(np.arctan((lam + p.a) / p.b) for lam in (lam1, lam2)) - math.pi / 2
    return lhs - rhs


@dataclass(frozen=True)
class GeneralCoeffs:
    """Coefficients of ``c2 l1 l2 + c1 (l1 + l2) + c0 = 0``."""

    c0: float
    c1: float
    c2: float

    def to_dict(self):
        return {"c0": self.c0, "c1": self.c1, "c2": self.c2}


def general_normalize(g):
    """Return ``(shift, product)`` with ``(l1 + shift)(l2 + shift) = product``."""
    if g.c2 == 0:
        raise StructureViolation("c2 must be nonzero")
    if g.c0 * g.c2 >= g.c1 * g.c1:
        raise StructureViolation("structure condition c0*c2 < c1^2 fails")
    shift = g.c1 / g.c2
    product = (g.c1 * g.c1 - g.c0 * g.c2) / (g.c2 * g.c2)
    return shift, product


def three_term_residual(g, lambda1, lambda2):
    """Residual of the three-term equation, normalised by ``c2``."""
    shift, product = general_normalize(g)
    return (np.asarray(lambda1) + shift) * (np.asarray(lambda2) + shift) - product


def general_shift_sign(g, A):
    """``+1`` when ``A + (c1/c2) I`` is positive definite, ``-1`` when negative definite."""
    shift, _ = general_normalize(g)
    lo, hi, _ = eigen_sym2(check_sym2(A) + shift * np.eye(2))
    if np.all(lo > 0):
        return 1
    if np.all(hi < 0):
        return -1
    raise StructureViolation("A + (c1/c2) I is indefinite")


def q_matrix_general(g, A):
    """Q for the three-term equation: ``+-(A + (c1/c2) I)``, the positive-definite sign.

    On the convex side this is ``c2 P (DG(A))^{-1}`` with ``P`` the reduced
    product, matching the Monge-Ampere convention ``Q = A``.
    """
    shift, _ = general_normalize(g)
    B = check_sym2(A) + shift * np.eye(2)
    return general_shift_sign(g, A) * B
