"""Coefficient container for the expansion at infinity and its evaluation.

The expansion is::

    u(x) ~ x^T A x / 2 + beta.x + gamma + d ln(x^T Q x)
           + (x^T Q x)^(-1/2) (d1 e_1 + d2 e_2),   e = Q^(1/2) x / |Q^(1/2) x|
"""

from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import check_points, check_sym2

_FIELDS = ("A", "beta", "gamma", "d", "d1", "d2", "Q")


def sqrtm_sym2(M):
    """Principal square root of a symmetric positive definite 2x2 matrix."""
    M = check_sym2(M)
    w, V = np.linalg.eigh(M)
    if np.any(w <= 0):
        raise ValueError("matrix is not positive definite")
    return (V * np.sqrt(w)) @ V.T


def inv_sqrtm_sym2(M):
    M = check_sym2(M)
    w, V = np.linalg.eigh(M)
    if np.any(w <= 0):
        raise ValueError("matrix is not positive definite")
    return (V / np.sqrt(w)) @ V.T


@dataclass
class ExpansionCoeffs:
    """The sextuple (A, beta, gamma, d, d1, d2) with the matrix Q it refers to.

    Any field may be ``None`` when it is unknown (partial ground truth).
    ``errors`` maps field names to error estimates.
    """

    A: np.ndarray | None = None
    beta: np.ndarray | None = None
    gamma: float | None = None
    d: float | None = None
    d1: float | None = None
    d2: float | None = None
    Q: np.ndarray | None = None
    errors: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.A is not None:
            self.A = check_sym2(self.A)
        if self.Q is not None:
            self.Q = check_sym2(self.Q)
        if self.beta is not None:
            self.beta = np.asarray(self.beta, dtype=float).reshape(2)
        for name in ("gamma", "d", "d1", "d2"):
            value = getattr(self, name)
            if value is not None:
                setattr(self, name, float(value))

    @property
    def complete(self):
        return all(getattr(self, name) is not None for name in _FIELDS)

    def replace(self, **changes):
        return replace(self, **changes)

    def rescaled_q(self, s):
        """The same expansion written relative to ``s * Q``.

        ``ln(x^T sQ x) = ln s + ln(x^T Q x)`` moves ``-d ln s`` into gamma, and
        ``(x^T sQ x)^(-1/2) = s^(-1/2) (x^T Q x)^(-1/2)`` scales (d1, d2) by ``sqrt(s)``.
        """
        s = float(s)
        return self.replace(
            Q=s * self.Q,
            gamma=None if self.gamma is None else self.gamma - self.d * np.log(s),
            d1=None if self.d1 is None else self.d1 * np.sqrt(s),
            d2=None if self.d2 is None else self.d2 * np.sqrt(s),
            errors=dict(self.errors),
        )

    def to_dict(self):
        out = {}
        for name in _FIELDS:
            value = getattr(self, name)
            if isinstance(value, np.ndarray):
                value = value.tolist()
            out[name] = value
        if self.errors:
            out["errors"] = {k: float(v) for k, v in sorted(self.errors.items())}
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        errors = data.pop("errors", {})
        kwargs = {k: (np.asarray(v) if isinstance(v, list) else v) for k, v in data.items()}
        return cls(errors=errors, **kwargs)


def evaluate_expansion(coeffs, X, a_ref=None):
    """Evaluate the truncated expansion at points ``X`` of shape (..., 2).

    With ``a_ref`` given, the quadratic part is returned relative to it, i.e. the
    result is the expansion minus ``x^T a_ref x / 2``.  Solutions expose the same
    split so differences avoid cancellation at large ``|x|``.
    """
    X = check_points(X)
    A = coeffs.A if a_ref is None else coeffs.A - check_sym2(a_ref)
    out = 0.5 * np.einsum("...i,ij,...j->...", X, A, X)
    out = out + X @ coeffs.beta + coeffs.gamma
    Q = coeffs.Q
    qx = np.einsum("...i,ij,...j->...", X, Q, X)
    out = out + coeffs.d * np.log(qx)
    if coeffs.d1 is not None and coeffs.d2 is not None:
        e = X @ sqrtm_sym2(Q).T
        out = out + (coeffs.d1 * e[..., 0] + coeffs.d2 * e[..., 1]) / qx
    return out
