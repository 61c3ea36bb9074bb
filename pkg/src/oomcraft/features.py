"""Feature maps from length-``L`` observation windows to real vectors.

Two families are provided: one-hot indicators over all discrete windows, and
bounded random Gaussian bases for continuous observations. Both maps work on
single windows (``evaluate``) and on stacked windows (``evaluate_many``), the
latter being what the statistics module uses.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import DimensionError, InputError

__all__ = [
    "DiscreteIndicatorMap",
    "GaussianRandomMap",
    "make_gaussian_map",
    "median_bandwidth",
    "evaluate",
]

_BANDWIDTH_SUBSAMPLE = 1000


@dataclass(frozen=True)
class DiscreteIndicatorMap:
    """One-hot encoding of a window in lexicographic order over the alphabet.

    The window ``(x_1, ..., x_L)`` maps to index ``sum_j x_j K**(L-j)``, so the
    first symbol is the most significant digit.
    """

    alphabet_size: int
    window_len: int

    def __post_init__(self):
        if self.alphabet_size < 1 or self.window_len < 1:
            raise InputError("alphabet_size and window_len must be >= 1")

    @property
    def dimension(self):
        return self.alphabet_size ** self.window_len

    def indices(self, windows):
        """Lexicographic indices of stacked windows, shape ``(n, L) -> (n,)``."""
        w = np.asarray(windows)
        if w.ndim == 1:
            w = w[None, :]
        if w.shape[-1] != self.window_len:
            raise DimensionError(f"window length {w.shape[-1]} != L={self.window_len}")
        if w.size and (w.min() < 0 or w.max() >= self.alphabet_size):
            raise InputError(f"symbols must lie in [0, {self.alphabet_size})")
        weights = self.alphabet_size ** np.arange(self.window_len - 1, -1, -1, dtype=np.int64)
        return w.astype(np.int64) @ weights

    def evaluate(self, window):
        out = np.zeros(self.dimension)
        out[self.indices(window)[0]] = 1.0
        return out

    def evaluate_many(self, windows):
        idx = self.indices(windows)
        out = np.zeros((idx.shape[0], self.dimension))
        out[np.arange(idx.shape[0]), idx] = 1.0
        return out


@dataclass(frozen=True)
class GaussianRandomMap:
    r"""Gaussian bumps :math:`\exp(-b_j \|w - c_j\|^2)` around random centers.

    Windows of ``window_len`` points in ``obs_dim`` dimensions are flattened to
    vectors of length ``window_len * obs_dim`` before evaluation. Outputs lie in
    ``(0, 1]``, so the map is bounded.
    """

    centers: np.ndarray
    inverse_bandwidths: np.ndarray
    window_len: int
    obs_dim: int
    seed: int | None = None
    bandwidth_rule: str = "median"

    def __post_init__(self):
        centers = np.array(self.centers, dtype=float, ndmin=2)
        inv_bw = np.array(self.inverse_bandwidths, dtype=float).ravel()
        if centers.shape[1] != self.window_len * self.obs_dim:
            raise DimensionError(
                f"centers have {centers.shape[1]} columns, expected {self.window_len * self.obs_dim}"
            )
        if inv_bw.shape[0] != centers.shape[0]:
            raise DimensionError("need one inverse bandwidth per center")
        if np.any(inv_bw <= 0) or not np.all(np.isfinite(inv_bw)):
            raise InputError("inverse bandwidths must be positive and finite")
        centers.setflags(write=False)
        inv_bw.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "inverse_bandwidths", inv_bw)

    @property
    def dimension(self):
        return self.centers.shape[0]

    @property
    def input_dim(self):
        return self.window_len * self.obs_dim

    def _flatten(self, windows):
        # accepts (..., L, d), and for scalar observations also (..., L)
        w = np.asarray(windows, dtype=float)
        stacked_points = w.ndim >= 2 and w.shape[-2:] == (self.window_len, self.obs_dim)
        if stacked_points:
            w = w.reshape(w.shape[:-2] + (self.input_dim,))
        elif self.obs_dim != 1 or w.ndim == 0 or w.shape[-1] != self.window_len:
            raise DimensionError(
                f"window of shape {w.shape} does not match L={self.window_len}, d={self.obs_dim}"
            )
        if not np.all(np.isfinite(w)):
            raise InputError("windows contain non-finite values")
        return w

    def evaluate(self, window):
        w = self._flatten(window).ravel()
        if w.shape[0] != self.input_dim:
            raise DimensionError(f"window length mismatch for L={self.window_len}")
        d2 = np.sum((self.centers - w) ** 2, axis=1)
        return np.exp(-self.inverse_bandwidths * d2)

    def evaluate_many(self, windows):
        w = self._flatten(windows)
        w = w.reshape(-1, self.input_dim)
        # ||w - c||^2 expanded; clipped because cancellation can go slightly negative
        d2 = (
            np.sum(w * w, axis=1)[:, None]
            - 2.0 * (w @ self.centers.T)
            + np.sum(self.centers * self.centers, axis=1)[None, :]
        )
        np.maximum(d2, 0.0, out=d2)
        d2 *= -self.inverse_bandwidths
        return np.exp(d2, out=d2)


def median_bandwidth(samples, rng=None, max_points=_BANDWIDTH_SUBSAMPLE):
    """Median pairwise Euclidean distance among (at most ``max_points``) samples."""
    x = np.asarray(samples, dtype=float)
    x = x.reshape(x.shape[0], -1)
    if x.shape[0] > max_points:
        rng = np.random.default_rng(rng)
        x = x[np.sort(rng.choice(x.shape[0], size=max_points, replace=False))]
    if x.shape[0] < 2:
        return 0.0
    return float(np.median(pdist(x)))


def make_gaussian_map(samples, dimension, seed=None, bandwidth_rule="median"):
    """Build a :class:`GaussianRandomMap` whose centers are drawn from data.

    Parameters
    ----------
    samples : array_like (n, L) or (n, L, d)
        Observation windows. A 2-D array is read as scalar observations.
    dimension : int
        Number of features ``D``.
    seed : int, optional
        Seeds both the center draw (uniform, with replacement) and the
        subsample used by the bandwidth rule.
    bandwidth_rule : "median" or float
        ``"median"`` sets every inverse bandwidth to ``1 / (2 s**2)`` where ``s``
        is the median pairwise distance among up to 1000 subsampled windows.
        A float is used as ``s`` directly.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3:
        raise DimensionError("samples must have shape (n, L) or (n, L, d)")
    if x.shape[0] == 0:
        raise InputError("cannot build a feature map from an empty sample set")
    if dimension < 1:
        raise InputError("feature dimension must be >= 1")
    n, window_len, obs_dim = x.shape
    flat = x.reshape(n, -1)
    rng = np.random.default_rng(seed)
    centers = flat[rng.integers(0, n, size=dimension)]
    if bandwidth_rule == "median":
        scale = median_bandwidth(flat, rng)
    else:
        scale = float(bandwidth_rule)
    if not scale > 0:
        # degenerate data (one distinct window); unit scale keeps the map well defined
        scale = 1.0
    inv_bw = np.full(dimension, 1.0 / (2.0 * scale**2))
    return GaussianRandomMap(
        centers=centers,
        inverse_bandwidths=inv_bw,
        window_len=window_len,
        obs_dim=obs_dim,
        seed=seed,
        bandwidth_rule=str(bandwidth_rule),
    )


def evaluate(feature_map, window):
    """Evaluate ``feature_map`` on a single window."""
    return feature_map.evaluate(window)
