"""Window extraction and empirical moment accumulation.

For every position ``t`` with a full context of ``L`` observations on both
sides, a trajectory contributes one window triple::

    prefix   = x[t-L : t]
    mid      = x[t]
    suffix   = x[t+1 : t+L+1]
    midblock = x[t : t+L]

The first-moment vector of ``phi2`` and the cross moment ``c12`` pair the
prefix with the *midblock*, while ``c13`` pairs the prefix with the *suffix*.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import CapacityError, DimensionError, InputError
from .features import DiscreteIndicatorMap

__all__ = [
    "WindowTriple",
    "BinlessCache",
    "SufficientStats",
    "extract_windows",
    "trajectory_windows",
    "accumulate",
]

log = logging.getLogger(__name__)

_MAX_COUNT_CELLS = 50_000_000
_CHUNK = 20_000


@dataclass(frozen=True)
class WindowTriple:
    prefix: np.ndarray
    mid: object
    suffix: np.ndarray
    midblock: np.ndarray
    trajectory: int
    offset: int


def trajectory_windows(traj, L):
    """Stacked ``(prefix, mid, suffix, midblock)`` arrays of one trajectory.

    Returns ``None`` when the trajectory is shorter than ``2L + 1``. Window
    arrays have shape ``(n, L)`` for discrete data and ``(n, L, d)`` for
    continuous data, with ``n = T - 2L``. They are read-only views.
    """
    traj = np.asarray(traj)
    n = traj.shape[0] - 2 * L
    if n < 1:
        return None
    win = sliding_window_view(traj, L, axis=0)
    if traj.ndim == 2:
        win = np.moveaxis(win, -1, 1)
    return win[:n], traj[L : L + n], win[L + 1 : L + 1 + n], win[L : L + n]


def extract_windows(dataset, L, skipped=None):
    """Yield every :class:`WindowTriple` of ``dataset`` in (trajectory, offset) order.

    Trajectories shorter than ``2L + 1`` are skipped; if ``skipped`` is a list,
    the index of each skipped trajectory is appended to it.
    """
    if L < 1:
        raise InputError("window length L must be >= 1")
    for i, traj in enumerate(dataset):
        pieces = trajectory_windows(traj, L)
        if pieces is None:
            if skipped is not None:
                skipped.append(i)
            continue
        prefix, mid, suffix, midblock = pieces
        for k in range(prefix.shape[0]):
            yield WindowTriple(prefix[k], mid[k], suffix[k], midblock[k], i, k + L)


@dataclass
class BinlessCache:
    """Per-window features kept for the binless learner, ordered by (trajectory, offset)."""

    phi1_prefix: np.ndarray
    phi2_suffix: np.ndarray
    points: np.ndarray
    trajectory: np.ndarray
    offset: np.ndarray

    def __len__(self):
        return self.points.shape[0]


@dataclass
class SufficientStats:
    """Empirical means of the feature moments over ``n`` windows.

    ``c13`` is a ``(K, D1, D2)`` array indexed by the middle symbol and is only
    present for discrete data; ``cache`` is only present in binless mode.
    """

    phi1_bar: np.ndarray
    phi2_bar: np.ndarray
    c12: np.ndarray
    n: int
    c13: np.ndarray | None = None
    cache: BinlessCache | None = None
    n_skipped: int = 0
    mode: str = "discrete"

    @property
    def alphabet_size(self):
        return None if self.c13 is None else self.c13.shape[0]

    def c13_total(self):
        r""":math:`\frac1N\sum_n \phi_1(\mathrm{prefix}_n)\phi_2(\mathrm{suffix}_n)^\top`."""
        if self.c13 is not None:
            return self.c13.sum(axis=0)
        if self.cache is not None:
            return self.cache.phi1_prefix.T @ self.cache.phi2_suffix / self.n
        raise InputError("statistics carry neither c13 nor a binless cache")

    def merge(self, other):
        """Count-weighted combination of two shards."""
        if self.mode != other.mode or self.c12.shape != other.c12.shape:
            raise DimensionError("cannot merge statistics of different shape or mode")
        n = self.n + other.n
        a, b = self.n / n, other.n / n

        def mix(x, y):
            return a * x + b * y

        c13 = None
        if self.c13 is not None and other.c13 is not None:
            if self.c13.shape != other.c13.shape:
                raise DimensionError("alphabet sizes differ between shards")
            c13 = mix(self.c13, other.c13)
        cache = None
        if self.cache is not None and other.cache is not None:
            shift = int(self.cache.trajectory.max()) + 1 if len(self.cache) else 0
            cache = BinlessCache(
                np.concatenate([self.cache.phi1_prefix, other.cache.phi1_prefix]),
                np.concatenate([self.cache.phi2_suffix, other.cache.phi2_suffix]),
                np.concatenate([self.cache.points, other.cache.points]),
                np.concatenate([self.cache.trajectory, other.cache.trajectory + shift]),
                np.concatenate([self.cache.offset, other.cache.offset]),
            )
        return SufficientStats(
            phi1_bar=mix(self.phi1_bar, other.phi1_bar),
            phi2_bar=mix(self.phi2_bar, other.phi2_bar),
            c12=mix(self.c12, other.c12),
            n=n,
            c13=c13,
            cache=cache,
            n_skipped=self.n_skipped + other.n_skipped,
            mode=self.mode,
        )


class _CompensatedSum:
    """Neumaier summation of equally shaped arrays."""

    def __init__(self, shape):
        self.total = np.zeros(shape)
        self.comp = np.zeros(shape)

    def add(self, x):
        t = self.total + x
        self.comp += np.where(np.abs(self.total) >= np.abs(x), (self.total - t) + x, (x - t) + self.total)
        self.total = t

    def value(self):
        return self.total + self.comp


@dataclass
class _Windows:
    prefix: list = field(default_factory=list)
    mid: list = field(default_factory=list)
    suffix: list = field(default_factory=list)
    midblock: list = field(default_factory=list)
    trajectory: list = field(default_factory=list)
    offset: list = field(default_factory=list)
    skipped: int = 0


def _gather(dataset, L):
    w = _Windows()
    for i, traj in enumerate(dataset):
        pieces = trajectory_windows(traj, L)
        if pieces is None:
            w.skipped += 1
            continue
        prefix, mid, suffix, midblock = pieces
        w.prefix.append(prefix)
        w.mid.append(mid)
        w.suffix.append(suffix)
        w.midblock.append(midblock)
        w.trajectory.append(np.full(prefix.shape[0], i, dtype=np.int64))
        w.offset.append(np.arange(L, L + prefix.shape[0], dtype=np.int64))
    if w.skipped:
        log.warning("skipped %d trajectories shorter than 2L+1=%d", w.skipped, 2 * L + 1)
    if not w.prefix:
        raise InputError(f"no trajectory is long enough for windows of length 2L+1={2 * L + 1}")
    return w


def _count_indicator_stats(w, phi1, phi2, n_symbols):
    d1, d2 = phi1.dimension, phi2.dimension
    if d1 * d2 * max(n_symbols, 1) > _MAX_COUNT_CELLS:
        raise CapacityError(
            f"indicator statistics need {d1 * d2 * n_symbols} cells; reduce L or the alphabet"
        )
    prefix = np.concatenate(w.prefix)
    midblock = np.concatenate(w.midblock)
    suffix = np.concatenate(w.suffix)
    mid = np.concatenate(w.mid).astype(np.int64)
    n = prefix.shape[0]
    i1 = phi1.indices(prefix)
    i2 = phi2.indices(midblock)
    i3 = phi2.indices(suffix)
    # integer counts keep the means exact and independent of trajectory order
    phi1_bar = np.bincount(i1, minlength=d1) / n
    phi2_bar = np.bincount(i2, minlength=d2) / n
    c12 = np.bincount(i1 * d2 + i2, minlength=d1 * d2).reshape(d1, d2) / n
    c13 = np.bincount((mid * d1 + i1) * d2 + i3, minlength=n_symbols * d1 * d2)
    c13 = c13.reshape(n_symbols, d1, d2) / n
    return phi1_bar, phi2_bar, c12, c13, n


def _dense_stats(w, phi1, phi2, n_symbols, keep_cache):
    d1, d2 = phi1.dimension, phi2.dimension
    prefix = np.concatenate(w.prefix)
    midblock = np.concatenate(w.midblock)
    suffix = np.concatenate(w.suffix)
    mid = np.concatenate(w.mid)
    n = prefix.shape[0]
    s1, s2 = _CompensatedSum(d1), _CompensatedSum(d2)
    s12 = _CompensatedSum((d1, d2))
    s13 = _CompensatedSum((n_symbols, d1, d2)) if n_symbols else None
    cache1, cache3 = [], []
    for start in range(0, n, _CHUNK):
        sl = slice(start, min(start + _CHUNK, n))
        f1 = phi1.evaluate_many(prefix[sl])
        f2 = phi2.evaluate_many(midblock[sl])
        s1.add(f1.sum(axis=0))
        s2.add(f2.sum(axis=0))
        s12.add(f1.T @ f2)
        if s13 is not None or keep_cache:
            f3 = phi2.evaluate_many(suffix[sl])
        if s13 is not None:
            part = np.zeros((n_symbols, d1, d2))
            sym = mid[sl].astype(np.int64)
            for x in np.unique(sym):
                sel = sym == x
                part[x] = f1[sel].T @ f3[sel]
            s13.add(part)
        if keep_cache:
            cache1.append(f1)
            cache3.append(f3)
    cache = None
    if keep_cache:
        points = np.asarray(mid, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        cache = BinlessCache(
            phi1_prefix=np.concatenate(cache1),
            phi2_suffix=np.concatenate(cache3),
            points=points,
            trajectory=np.concatenate(w.trajectory),
            offset=np.concatenate(w.offset),
        )
    c13 = s13.value() / n if s13 is not None else None
    return s1.value() / n, s2.value() / n, s12.value() / n, c13, n, cache


def accumulate(dataset, phi1, phi2, mode="discrete", alphabet_size=None):
    """Empirical sufficient statistics of ``dataset`` under two feature maps.

    Parameters
    ----------
    dataset : TrajectoryDataset
    phi1, phi2 : feature maps with equal ``window_len``
        ``phi1`` acts on prefixes, ``phi2`` on midblocks and suffixes.
    mode : {"discrete", "binless"}
        ``"discrete"`` also accumulates ``c13`` per middle symbol and requires
        symbol data. ``"binless"`` keeps per-window prefix/suffix features and
        the middle observation for :func:`oomcraft.spectral.learn_binless`.
    alphabet_size : int, optional
        Number of symbols in discrete mode; defaults to the dataset's alphabet.

    Returns
    -------
    SufficientStats
    """
    if phi1.window_len != phi2.window_len:
        raise DimensionError("phi1 and phi2 must use the same window length L")
    if mode not in ("discrete", "binless"):
        raise InputError(f"unknown accumulation mode {mode!r}")
    L = phi1.window_len
    n_symbols = 0
    if mode == "discrete":
        if dataset.kind != "discrete":
            raise InputError("discrete accumulation requires symbol observations")
        n_symbols = int(alphabet_size or dataset.alphabet_size)
    w = _gather(dataset, L)
    if mode == "discrete" and all(isinstance(p, DiscreteIndicatorMap) for p in (phi1, phi2)):
        phi1_bar, phi2_bar, c12, c13, n = _count_indicator_stats(w, phi1, phi2, n_symbols)
        cache = None
    else:
        phi1_bar, phi2_bar, c12, c13, n, cache = _dense_stats(
            w, phi1, phi2, n_symbols, keep_cache=(mode == "binless")
        )
    return SufficientStats(
        phi1_bar=phi1_bar,
        phi2_bar=phi2_bar,
        c12=c12,
        n=n,
        c13=c13,
        cache=cache,
        n_skipped=w.skipped,
        mode=mode,
    )
