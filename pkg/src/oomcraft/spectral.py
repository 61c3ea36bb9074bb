"""Spectral learners for observable operator models.

``learn_discrete`` is the generic spectral procedure; ``learn_discrete_equilibrium``
replaces its initial state by the equilibrium state vector; ``learn_binless``
is the binless equilibrium learner for continuous observations.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InputError, RankDeficiencyError
from .features import DiscreteIndicatorMap, make_gaussian_map
from .model import BinlessOom, Oom
from .numerics import pseudoinverse, truncated_svd, vector_pseudoinverse
from .statistics import accumulate, trajectory_windows

__all__ = [
    "LearnerConfig",
    "ProjectionPair",
    "fit_projection",
    "learn_discrete",
    "equilibrium_state",
    "learn_discrete_equilibrium",
    "learn_binless",
    "fit_discrete",
    "fit_binless",
    "binless_feature_maps",
]


@dataclass(frozen=True)
class LearnerConfig:
    """Hyperparameters shared by the learners.

    Defaults follow the benchmark experiment settings (``L=3``, ``m=10``,
    ``D1=D2=100``). ``D1``/``D2`` only apply to random Gaussian features; for
    indicator features the dimension is ``K**L``.
    """

    m: int = 10
    L: int = 3
    D1: int = 100
    D2: int = 100
    svd_floor: float = 1e-10
    seed: int | None = None
    bandwidth: str | float = "median"

    def __post_init__(self):
        if min(self.m, self.L, self.D1, self.D2) < 1:
            raise InputError("m, L, D1 and D2 must all be >= 1")
        if self.m > min(self.D1, self.D2):
            raise InputError(f"m={self.m} exceeds min(D1, D2)={min(self.D1, self.D2)}")
        if not self.svd_floor >= 0:
            raise InputError("svd_floor must be nonnegative")


@dataclass(frozen=True)
class ProjectionPair:
    r"""``f1 = U diag(s)^{-1}`` and ``f2 = V`` from the truncated SVD of ``c12``.

    By construction ``f1.T @ c12 @ f2`` is the ``m x m`` identity up to the
    discarded singular directions.
    """

    f1: np.ndarray
    f2: np.ndarray
    singular_values: np.ndarray
    effective_rank: int


def fit_projection(c12, m, svd_floor=1e-10):
    """Projection pair of rank ``m``; raises if fewer than ``m`` singular values survive.

    Singular values ``s_i <= svd_floor * s_max`` do not count towards the rank.
    """
    c12 = np.asarray(c12, dtype=float)
    if m > min(c12.shape):
        raise DimensionError(f"m={m} exceeds the feature dimensions {c12.shape}")
    full = np.linalg.svd(c12, compute_uv=False)
    smax = full[0] if full.size else 0.0
    rank = int(np.count_nonzero(full > svd_floor * smax)) if smax > 0 else 0
    if rank < m:
        raise RankDeficiencyError(rank, m)
    svd = truncated_svd(c12, m)
    return ProjectionPair(
        f1=svd.u / svd.sigma, f2=svd.v, singular_values=full, effective_rank=rank
    )


def learn_discrete(stats, cfg):
    """Spectral estimate of a discrete-observation OOM.

    ``sigma = F1' phi1_bar``, ``Xi(x) = F1' C13(x) F2`` and
    ``omega = phi2_bar' F2``. The initial state is the time-averaged state of
    the data, so it is only meaningful for stationary data.
    """
    if stats.c13 is None:
        raise InputError("discrete learning needs statistics accumulated in discrete mode")
    proj = fit_projection(stats.c12, cfg.m, cfg.svd_floor)
    f1, f2 = proj.f1, proj.f2
    sigma = f1.T @ stats.phi1_bar
    xi = np.einsum("di,kde,ej->kij", f1, stats.c13, f2)
    omega = stats.phi2_bar @ f2
    return Oom(omega=omega, xi=xi, sigma=sigma, flavor="plain")


_TINY_NORM = math.sqrt(np.finfo(float).tiny)


def equilibrium_state(xi_total, sigma):
    r"""State vector ``w`` minimizing ``||w Xi(O) - w||^2`` subject to ``w sigma = 1``.

    Uses the closed-form least-squares solution

    .. math::
        w = \sigma^+ - \sigma^+ (\Xi - I)\left((I - \sigma\sigma^+)(\Xi - I)\right)^+ (I - \sigma\sigma^+)

    with :math:`\sigma^+ = \sigma^\top / \|\sigma\|^2`. Among all minimizers the
    one with the smallest component orthogonal to ``sigma`` is returned.
    """
    xi_total = np.asarray(xi_total, dtype=float)
    sigma = np.asarray(sigma, dtype=float).ravel()
    m = sigma.shape[0]
    if xi_total.shape != (m, m):
        raise DimensionError(f"Xi(O) has shape {xi_total.shape}, expected ({m}, {m})")
    if not np.all(np.isfinite(sigma)) or np.linalg.norm(sigma) < _TINY_NORM:
        raise InputError("evaluation vector sigma is numerically zero or non-finite")
    sp = vector_pseudoinverse(sigma)
    eye = np.eye(m)
    proj = eye - np.outer(sigma, sp)
    shifted = xi_total - eye
    w = sp - (sp @ shifted) @ pseudoinverse(proj @ shifted) @ proj
    return w


def learn_discrete_equilibrium(stats, cfg):
    """Discrete spectral estimate with the state replaced by :func:`equilibrium_state`."""
    oom = learn_discrete(stats, cfg)
    omega = equilibrium_state(oom.xi.sum(axis=0), oom.sigma)
    return Oom(omega=omega, xi=oom.xi, sigma=oom.sigma, flavor="equilibrium")


def learn_binless(stats, cfg):
    r"""Binless equilibrium OOM over the middle observations of all windows.

    Each sample point ``z_n`` carries the rank-one operator
    ``W_n = a_n b_n'`` with ``a_n = F1' phi1(prefix_n) / sqrt(N)`` and
    ``b_n = F2' phi2(suffix_n) / sqrt(N)``; only the factors are stored.
    """
    cache = stats.cache
    if cache is None:
        raise InputError("binless learning needs statistics accumulated in binless mode")
    proj = fit_projection(stats.c12, cfg.m, cfg.svd_floor)
    scale = 1.0 / math.sqrt(stats.n)
    left = (cache.phi1_prefix @ proj.f1) * scale
    right = (cache.phi2_suffix @ proj.f2) * scale
    sigma = proj.f1.T @ stats.phi1_bar
    omega = equilibrium_state(left.T @ right, sigma)
    return BinlessOom(omega=omega, points=cache.points, left=left, right=right, sigma=sigma)


def fit_discrete(dataset, cfg, equilibrium=True, alphabet_size=None):
    """Indicator features, statistics and a learned OOM from a symbol dataset."""
    k = int(alphabet_size or dataset.alphabet_size)
    phi = DiscreteIndicatorMap(k, cfg.L)
    stats = accumulate(dataset, phi, phi, mode="discrete", alphabet_size=k)
    learner = learn_discrete_equilibrium if equilibrium else learn_discrete
    oom = learner(stats, cfg)
    return oom.with_feature_map(phi)


def binless_feature_maps(dataset, cfg):
    """Gaussian maps ``(phi1, phi2)`` with centers drawn from the length-``L`` windows of ``dataset``.

    With ``D1 == D2`` a single map is shared.
    """
    windows = []
    for traj in dataset:
        pieces = trajectory_windows(traj, cfg.L)
        if pieces is not None:
            windows.append(pieces[0])
    if not windows:
        raise InputError(f"no trajectory is long enough for windows of length {2 * cfg.L + 1}")
    windows = np.concatenate(windows)
    phi1 = make_gaussian_map(windows, cfg.D1, seed=cfg.seed, bandwidth_rule=cfg.bandwidth)
    if cfg.D2 == cfg.D1:
        return phi1, phi1
    seed2 = None if cfg.seed is None else cfg.seed + 1
    phi2 = make_gaussian_map(windows, cfg.D2, seed=seed2, bandwidth_rule=cfg.bandwidth)
    return phi1, phi2


def fit_binless(dataset, cfg, feature_maps=None):
    """Gaussian features, binless statistics and a binless OOM from a continuous dataset."""
    if dataset.kind != "continuous":
        raise InputError("binless learning expects continuous observations")
    phi1, phi2 = feature_maps if feature_maps is not None else binless_feature_maps(dataset, cfg)
    stats = accumulate(dataset, phi1, phi2, mode="binless")
    return learn_binless(stats, cfg).with_feature_map(phi1)
