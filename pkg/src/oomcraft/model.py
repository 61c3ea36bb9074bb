"""Observable operator models and their probability algebra.

An ``m``-dimensional OOM ``(omega, {Xi(x)}, sigma)`` assigns the sequence
``x_1 ... x_t`` the value ``omega Xi(x_1) ... Xi(x_t) sigma``. Learned models
are only approximately valid, so this value can be slightly negative; it is
returned as is unless clamping is requested.
"""

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import CapacityError, DimensionError, InputError

__all__ = [
    "Oom",
    "BinlessOom",
    "BinSpec",
    "CoarseGrainedOom",
    "sequence_probability",
    "sequence_probabilities",
    "total_operator",
    "equilibrium_residual",
    "equilibrium_expectation_discrete",
    "binless_expectation_r1",
    "binless_lagged_moment",
    "coarse_grain_learn",
    "markov_chain_oom",
]

EQUILIBRIUM_NORM_TOL = 1e-10
_MAX_ENUMERATION_BITS = 20


def _readonly(a, ndim=None, name="array"):
    a = np.array(a, dtype=float)
    if ndim is not None and a.ndim != ndim:
        raise DimensionError(f"{name} must have {ndim} dimensions, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError(f"{name} contains non-finite entries")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Oom:
    """Discrete-observation OOM with symbols ``0 .. K-1``.

    Attributes
    ----------
    omega : ndarray (m,)
        Initial (``flavor="plain"``) or equilibrium state vector.
    xi : ndarray (K, m, m)
        Observable operators, ``xi[x]`` for symbol ``x``.
    sigma : ndarray (m,)
        Evaluation vector.
    flavor : {"plain", "equilibrium"}
    feature_map : optional
        Feature map the model was learned with, kept for serialization.
    """

    omega: np.ndarray
    xi: np.ndarray
    sigma: np.ndarray
    flavor: str = "plain"
    feature_map: object = None

    def __post_init__(self):
        omega = _readonly(self.omega, 1, "omega")
        sigma = _readonly(self.sigma, 1, "sigma")
        xi = _readonly(self.xi, 3, "xi")
        m = omega.shape[0]
        if sigma.shape != (m,) or xi.shape[1:] != (m, m):
            raise DimensionError(
                f"inconsistent shapes omega {omega.shape}, xi {xi.shape}, sigma {sigma.shape}"
            )
        if self.flavor not in ("plain", "equilibrium"):
            raise InputError(f"unknown flavor {self.flavor!r}")
        if self.flavor == "equilibrium" and abs(omega @ sigma - 1.0) > EQUILIBRIUM_NORM_TOL:
            raise InputError(f"equilibrium state violates omega.sigma = 1 (got {omega @ sigma!r})")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "xi", xi)

    @property
    def m(self):
        return self.omega.shape[0]

    @property
    def alphabet_size(self):
        return self.xi.shape[0]

    def with_feature_map(self, feature_map):
        return replace(self, feature_map=feature_map)

    def probability(self, seq, clamp=False):
        return sequence_probability(self, seq, clamp=clamp)


def sequence_probability(oom, seq, clamp=False):
    """``omega Xi(x_1) ... Xi(x_t) sigma``; the empty sequence gives ``omega sigma``."""
    state = oom.omega
    k = oom.alphabet_size
    for x in seq:
        if not (isinstance(x, (int, np.integer)) and 0 <= x < k):
            raise InputError(f"symbol {x!r} is not in the alphabet 0..{k - 1}")
        state = state @ oom.xi[x]
    p = float(state @ oom.sigma)
    return max(p, 0.0) if clamp else p


def sequence_probabilities(oom, length, clamp=False):
    """Values of all ``K**length`` sequences as an array of shape ``(K,) * length``."""
    k, m = oom.alphabet_size, oom.m
    if length * math.log2(max(k, 2)) > _MAX_ENUMERATION_BITS:
        raise CapacityError(f"{k}**{length} sequences exceed the enumeration limit")
    states = oom.omega[None, :]
    for _ in range(length):
        states = np.einsum("sm,kmn->skn", states, oom.xi).reshape(-1, m)
    p = states @ oom.sigma
    if clamp:
        p = np.maximum(p, 0.0)
    return p.reshape((k,) * length) if length else p.reshape(())


def total_operator(oom):
    """``Xi(O) = sum_x Xi(x)``."""
    return oom.xi.sum(axis=0)


def equilibrium_residual(oom):
    """``||omega Xi(O) - omega||``, zero for an exact equilibrium state."""
    return float(np.linalg.norm(oom.omega @ total_operator(oom) - oom.omega))


def equilibrium_expectation_discrete(oom, g, r):
    """Exact ``sum_z g(z) P(z)`` over all ``K**r`` sequences ``z`` of length ``r``.

    ``g`` is called with each sequence as a tuple of ints.
    """
    if r < 1:
        raise InputError("horizon r must be >= 1")
    probs = sequence_probabilities(oom, r).ravel()
    seqs = itertools.product(range(oom.alphabet_size), repeat=r)
    values = np.fromiter((g(z) for z in seqs), dtype=float, count=probs.size)
    return float(values @ probs)


def markov_chain_oom(transition_matrix, initial=None):
    """Exact OOM of a Markov chain observed directly.

    ``Xi(x) = diag(e_x) P`` and ``sigma = 1``. ``initial`` defaults to the
    stationary distribution, in which case the model has equilibrium flavor.
    """
    p = np.asarray(transition_matrix, dtype=float)
    k = p.shape[0]
    xi = np.zeros((k, k, k))
    for x in range(k):
        xi[x, x, :] = p[x]
    flavor = "plain"
    if initial is None:
        vals, vecs = np.linalg.eig(p.T)
        pi = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
        initial = pi / pi.sum()
        flavor = "equilibrium"
    return Oom(omega=initial, xi=xi, sigma=np.ones(k), flavor=flavor)


@dataclass(frozen=True)
class BinlessOom:
    """Equilibrium OOM supported on observed sample points.

    The operator of sample point ``n`` is ``W_n = outer(left[n], right[n])``,
    so ``Xi(O) = left.T @ right`` and point ``n`` carries the stationary weight
    ``(omega . left[n]) (right[n] . sigma)``.
    """

    omega: np.ndarray
    points: np.ndarray
    left: np.ndarray
    right: np.ndarray
    sigma: np.ndarray
    feature_map: object = None

    def __post_init__(self):
        omega = _readonly(self.omega, 1, "omega")
        sigma = _readonly(self.sigma, 1, "sigma")
        left = _readonly(self.left, 2, "left factors")
        right = _readonly(self.right, 2, "right factors")
        points = np.array(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        points = _readonly(points, 2, "sample points")
        m = omega.shape[0]
        n = points.shape[0]
        if n < 1:
            raise InputError("a binless OOM needs at least one sample point")
        if sigma.shape != (m,) or left.shape != (n, m) or right.shape != (n, m):
            raise DimensionError(
                f"inconsistent shapes: omega {omega.shape}, sigma {sigma.shape}, "
                f"left {left.shape}, right {right.shape}, points {points.shape}"
            )
        if abs(omega @ sigma - 1.0) > EQUILIBRIUM_NORM_TOL:
            raise InputError(f"equilibrium state violates omega.sigma = 1 (got {omega @ sigma!r})")
        for name, value in (("omega", omega), ("sigma", sigma), ("left", left),
                            ("right", right), ("points", points)):
            object.__setattr__(self, name, value)

    @property
    def m(self):
        return self.omega.shape[0]

    @property
    def n_points(self):
        return self.points.shape[0]

    @property
    def obs_dim(self):
        return self.points.shape[1]

    def with_feature_map(self, feature_map):
        return replace(self, feature_map=feature_map)

    def total_operator(self):
        return self.left.T @ self.right

    def weights(self):
        """Stationary weight ``omega W_n sigma`` of every sample point (may be negative)."""
        return (self.left @ self.omega) * (self.right @ self.sigma)

    def operator(self, n):
        return np.outer(self.left[n], self.right[n])


def _apply(fn, points):
    values = np.asarray(fn(points), dtype=float)
    if values.shape[0] != points.shape[0]:
        raise DimensionError("function must return one value (or row) per sample point")
    return values


def binless_expectation_r1(b, g):
    """``sum_n g(z_n) omega W_n sigma`` in ``O(N m)``.

    ``g`` maps the ``(N, d)`` array of sample points to ``N`` values (or an
    ``(N, k)`` array, giving a vector expectation).
    """
    values = _apply(g, b.points)
    w = b.weights()
    if values.ndim == 1:
        return float(values @ w)
    return w @ values


def binless_lagged_moment(b, f, g, tau):
    r"""Equilibrium moment ``E[f(x_t) g(x_{t+tau})^T]`` of a binless OOM.

    For ``tau >= 1`` this is ``A Xi(O)^{tau-1} B`` with
    ``A = sum_n f(z_n) (omega . left_n) right_n^T`` and
    ``B = sum_n left_n (right_n . sigma) g(z_n)^T``; ``tau = 0`` gives the
    weighted sample average ``sum_n f(z_n) g(z_n)^T omega W_n sigma``.

    ``f`` and ``g`` map the ``(N, d)`` point array to ``(N,)`` or ``(N, k)``.
    """
    if tau < 0:
        raise InputError("lag tau must be >= 0")
    fv = _apply(f, b.points)
    gv = _apply(g, b.points)
    fv = fv[:, None] if fv.ndim == 1 else fv
    gv = gv[:, None] if gv.ndim == 1 else gv
    wl = b.left @ b.omega
    wr = b.right @ b.sigma
    if tau == 0:
        return (fv * (wl * wr)[:, None]).T @ gv
    a = (fv * wl[:, None]).T @ b.right
    bb = b.left.T @ (gv * wr[:, None])
    if tau > 1:
        a = a @ np.linalg.matrix_power(b.total_operator(), tau - 1)
    return a @ bb


@dataclass(frozen=True)
class BinSpec:
    """Rectangular grid of bins on a box in ``R^d``, given by per-axis edges.

    Bins are half-open ``[lo, hi)`` except the last one on each axis, which
    also contains the upper box face. Bin indices are row-major.
    """

    edges: tuple

    def __post_init__(self):
        edges = tuple(_readonly(e, 1, "bin edges") for e in self.edges)
        if not edges:
            raise InputError("need edges for at least one axis")
        for e in edges:
            if e.shape[0] < 2 or np.any(np.diff(e) <= 0):
                raise InputError("bin edges must be strictly increasing with at least two entries")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def uniform(cls, lo, hi, n_bins):
        lo, hi, n_bins = np.atleast_1d(lo), np.atleast_1d(hi), np.atleast_1d(n_bins)
        return cls(tuple(np.linspace(a, b, int(k) + 1) for a, b, k in zip(lo, hi, n_bins)))

    @property
    def dim(self):
        return len(self.edges)

    @property
    def shape(self):
        return tuple(e.shape[0] - 1 for e in self.edges)

    @property
    def n_bins(self):
        return int(np.prod(self.shape))

    def volumes(self):
        widths = [np.diff(e) for e in self.edges]
        vol = widths[0]
        for w in widths[1:]:
            vol = np.multiply.outer(vol, w)
        return np.asarray(vol).ravel()

    def assign(self, points):
        """Row-major bin index of each point; points outside the box raise ``InputError``."""
        x = np.asarray(points, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[1] != self.dim:
            raise DimensionError(f"points have dimension {x.shape[1]}, bins expect {self.dim}")
        outside = np.zeros(x.shape[0], dtype=bool)
        parts = []
        for axis, e in enumerate(self.edges):
            col = x[:, axis]
            outside |= (col < e[0]) | (col > e[-1]) | ~np.isfinite(col)
            idx = np.searchsorted(e, col, side="right") - 1
            parts.append(np.clip(idx, 0, e.shape[0] - 2))
        if np.any(outside):
            first = int(np.argmax(outside))
            raise InputError(f"observation {x[first].tolist()} at index {first} lies outside the bin box")
        return np.ravel_multi_index(tuple(parts), self.shape)

    def centers(self):
        mids = [0.5 * (e[:-1] + e[1:]) for e in self.edges]
        grids = np.meshgrid(*mids, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)


@dataclass(frozen=True)
class CoarseGrainedOom:
    """Equilibrium OOM over bins, with the piecewise-constant density convention."""

    oom: Oom
    bins: BinSpec

    def bin_probabilities(self):
        """Equilibrium probability ``omega Xi(B_j) sigma`` of every bin."""
        return self.oom.xi @ self.oom.sigma @ self.oom.omega

    def density_operator(self, x):
        """``Xi(B(x)) / vol(B(x))`` for a single point ``x``."""
        j = int(self.bins.assign(np.atleast_2d(x))[0])
        return self.oom.xi[j] / self.bins.volumes()[j]


def coarse_grain_learn(dataset, bins, cfg):
    """Bin continuous observations and learn an equilibrium OOM over the bin alphabet."""
    from .data import TrajectoryDataset
    from .spectral import fit_discrete

    if dataset.kind != "continuous":
        raise InputError("coarse graining expects continuous observations")
    symbols = []
    for i, traj in enumerate(dataset):
        try:
            symbols.append(bins.assign(traj))
        except InputError as err:
            raise InputError(f"trajectory {i}: {err}") from None
    discrete = TrajectoryDataset(symbols, kind="discrete", metadata=dict(dataset.metadata))
    oom = fit_discrete(discrete, cfg, equilibrium=True, alphabet_size=bins.n_bins)
    return CoarseGrainedOom(oom=oom, bins=bins)
