"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

import numpy as np

from .exceptions import DomainViolation, InsufficientRings


def check_points(X, name="X"):
    """Return ``X`` as a float array whose last axis has length 2."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 0 or X.shape[-1] != 2:
        raise ValueError(f"{name} must have a trailing axis of length 2, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite entries")
    return X


def check_sym2(M, name="M"):
    """Return ``M`` as a float array of shape (..., 2, 2), symmetrised."""
    M = np.asarray(getattr(M, "array", M), dtype=float)
    if M.shape[-2:] != (2, 2):
        raise ValueError(f"{name} must have trailing shape (2, 2), got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def check_radii(radii, r_min=0.0, min_rings=1, name="radii"):
    """Strictly increasing positive radii, all at or beyond ``r_min``."""
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    if radii.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if radii.size < min_rings:
        raise InsufficientRings(f"need at least {min_rings} rings, got {radii.size}")
    if not np.all(np.isfinite(radii)) or np.any(radii <= 0):
        raise ValueError(f"{name} must be finite and positive")
    if radii.size > 1 and np.any(np.diff(radii) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    if radii[0] < r_min:
        raise DomainViolation(f"innermost radius {radii[0]} is below r_min={r_min}")
    return radii


def check_n_theta(n_theta, minimum=8):
    n_theta = int(n_theta)
    if n_theta < minimum or n_theta % 2:
        raise ValueError(f"n_theta must be even and >= {minimum}, got {n_theta}")
    return n_theta


def geometric_ladder(r_min, r_max, n_rings):
    """Geometric radius ladder r_i = r_min * rho**i ending exactly at r_max."""
    if not 0 < r_min < r_max:
        raise ValueError("need 0 < r_min < r_max")
    return np.geomspace(r_min, r_max, int(n_rings))


def angle_grid(n_theta):
    return 2.0 * np.pi * np.arange(n_theta) / n_theta
