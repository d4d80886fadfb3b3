"""Helpers shared by the fitting, flux and symmetry code."""

import numpy as np

from .._validation import angle_grid
from ..exceptions import DomainViolation
from ..expansion import inv_sqrtm_sym2
from ..operators import df_tau, eigen_sym2, f_tau, general_normalize, q_matrix, q_matrix_general, sym2_from_eigen


def canonical_q(sol, A):
    if sol.general is not None:
        return q_matrix_general(sol.general, A)
    if sol.tau is None:
        raise ValueError("solution carries no equation, Q is undefined")
    return q_matrix(sol.tau, A)


def equation_value(sol, A):
    l1, l2, _ = eigen_sym2(A)
    if sol.general is not None:
        shift, product = general_normalize(sol.general)
        return (l1 + shift) * (l2 + shift) - product
    return f_tau(sol.tau, l1, l2) - sol.C0


def project_onto_equation(sol, A):
    """One Newton step in eigenvalue space towards ``F(lambda(A)) = C0``."""
    if sol.general is None and (sol.tau is None or sol.C0 is None):
        return A
    l1, l2, ang = eigen_sym2(A)
    if sol.general is not None:
        shift, product = general_normalize(sol.general)
        r = (l1 + shift) * (l2 + shift) - product
        g1, g2 = l2 + shift, l1 + shift
    else:
        r = f_tau(sol.tau, l1, l2) - sol.C0
        g1, g2 = df_tau(sol.tau, l1), df_tau(sol.tau, l2)
    step = r / (g1 * g1 + g2 * g2)
    return sym2_from_eigen(l1 - step * g1, l2 - step * g2, ang)


def unit_circle(n_theta):
    th = angle_grid(n_theta)
    return th, np.stack([np.cos(th), np.sin(th)], axis=-1)


def ring_points(radii, n_theta):
    th, e = unit_circle(n_theta)
    return th, radii[:, None, None] * e[None]


def q_circle_points(Q, rhos, n_theta):
    """Points ``x = Q^{-1/2} rho e(theta)``, i.e. ``x^T Q x = rho^2``."""
    th, e = unit_circle(n_theta)
    Qmh = inv_sqrtm_sym2(Q)
    return th, rhos[:, None, None] * (e @ Qmh.T)[None]


def q_radius_range(sol, Q, r_lo, r_hi):
    """Largest interval of ``rho`` whose Q-ellipses lie in the annulus ``[r_lo, r_hi]``."""
    w = np.linalg.eigvalsh(Q)
    lo, hi = r_lo * np.sqrt(w[-1]), r_hi * np.sqrt(w[0])
    if not lo < hi:
        raise DomainViolation("Q is too anisotropic for the ladder span")
    return lo, hi


def check_ladder(sol, r_lo, r_hi):
    """Origin-centred rings with radii in ``[r_lo, r_hi]`` must avoid the excluded disk."""
    inner = sol.r_min + float(np.linalg.norm(sol.center))
    if sol.r_min == 0 and np.any(sol.center != 0):
        inner = float(np.linalg.norm(sol.center)) * 1.5
    if r_lo <= inner:
        raise DomainViolation(f"ladder starts at {r_lo}, inside the excluded region (<= {inner})")
    outer = sol.r_max - float(np.linalg.norm(sol.center))
    if r_hi > outer * (1 + 1e-12):
        raise DomainViolation(f"ladder ends at {r_hi}, beyond the solution's range {outer}")
