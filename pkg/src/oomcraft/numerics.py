"""Dense linear-algebra primitives used by the learners.

The decompositions themselves are delegated to LAPACK through numpy; this
module adds the input validation and the tolerance conventions the learners
rely on.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InputError

__all__ = [
    "TruncatedSvd",
    "as_finite_matrix",
    "truncated_svd",
    "pseudoinverse",
    "vector_pseudoinverse",
    "matrix_power_limit",
]


@dataclass(frozen=True)
class TruncatedSvd:
    r"""Rank-``m`` factorization :math:`A \approx U \mathrm{diag}(s) V^\top`.

    Attributes
    ----------
    u : ndarray (rows, m)
        Left singular vectors, orthonormal columns.
    sigma : ndarray (m,)
        Singular values in nonincreasing order.
    v : ndarray (cols, m)
        Right singular vectors, orthonormal columns.
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def rank(self):
        return self.sigma.shape[0]

    def reconstruct(self):
        return (self.u * self.sigma) @ self.v.T


def as_finite_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError(f"{name} contains non-finite entries")
    return a


def _full_svd(a):
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return u, s, vt.T


def truncated_svd(a, m):
    """Best rank-``m`` approximation of ``a`` in the Frobenius norm.

    Parameters
    ----------
    a : array_like (rows, cols)
        Finite real matrix.
    m : int
        Target rank, ``1 <= m <= min(rows, cols)``.

    Returns
    -------
    TruncatedSvd
        Leading ``m`` singular triplets. Ties at the truncation boundary keep
        the first ``m`` in LAPACK order.
    """
    a = as_finite_matrix(a)
    m = int(m)
    if not 1 <= m <= min(a.shape):
        raise DimensionError(f"rank target m={m} outside [1, {min(a.shape)}] for shape {a.shape}")
    u, s, v = _full_svd(a)
    return TruncatedSvd(u=u[:, :m].copy(), sigma=s[:m].copy(), v=v[:, :m].copy())


def pseudoinverse(a, rcond=None):
    """Moore-Penrose pseudoinverse via the SVD.

    Singular values at or below ``rcond * s_max`` are treated as zero. The
    default ``rcond`` is ``1e-12 * max(rows, cols)``.
    """
    a = as_finite_matrix(a)
    if a.size == 0:
        return np.zeros(a.shape[::-1])
    if rcond is None:
        rcond = 1e-12 * max(a.shape)
    elif rcond <= 0:
        raise InputError("rcond must be positive")
    u, s, v = _full_svd(a)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(a.shape[::-1])
    keep = s > rcond * s[0]
    return (v[:, keep] / s[keep]) @ u[:, keep].T


def vector_pseudoinverse(x):
    r"""Pseudoinverse of a column vector, :math:`x^+ = x^\top / \|x\|^2`, as a flat array."""
    x = np.asarray(x, dtype=float).ravel()
    nrm2 = float(x @ x)
    if nrm2 == 0.0:
        return np.zeros_like(x)
    return x / nrm2


def matrix_power_limit(a, max_iters=10_000, tol=1e-12):
    r"""Limit of :math:`A^k` as :math:`k \to \infty`, if it is reached numerically.

    Returns :math:`A^k` for the smallest ``k <= max_iters`` with
    ``max|A^{k+1} - A^k| < tol``, or ``None`` when no such ``k`` exists.
    """
    a = as_finite_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"matrix must be square, got shape {a.shape}")
    power = a.copy()
    for _ in range(int(max_iters)):
        nxt = power @ a
        if not np.all(np.isfinite(nxt)):
            return None
        if np.max(np.abs(nxt - power)) < tol:
            return power
        power = nxt
    return None
