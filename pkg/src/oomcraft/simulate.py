"""Brownian-dynamics benchmarks and nonequilibrium dataset generation.

Trajectories follow the overdamped Langevin equation
``dx = -grad V(x) dt + sqrt(2 / beta) dW``, integrated by Euler-Maruyama.
Every trajectory draws from its own random stream, derived from the master
seed and the trajectory index, so a dataset does not depend on how the work
is scheduled.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from .data import TrajectoryDataset
from .errors import InputError

__all__ = [
    "Potential1D",
    "Potential2D",
    "QuadraticPotential",
    "SimConfig",
    "benchmark_potential_1d",
    "benchmark_potential_2d",
    "default_config_1d",
    "default_config_2d",
    "simulate_trajectories",
    "trajectory_rng",
    "boltzmann_sampler",
    "find_minima_1d",
    "barrier_threshold",
    "identity_map",
    "well_indicator",
]

_NOISE_BLOCK = 4096


@dataclass(frozen=True)
class Potential1D:
    r"""Inverse-distance weighted mean of the levels ``values`` at ``centers``.

    .. math:: V(x) = \frac{\sum_i w_i(x) u_i}{\sum_i w_i(x)},\quad
              w_i(x) = (|x - c_i| + \epsilon)^{-2}

    Being a convex combination, ``V`` always lies between ``min(u)`` and ``max(u)``.
    """

    centers: tuple = (-0.3, 0.5, 1.0, 1.5, 2.3)
    values: tuple = (21.0, 4.0, 8.0, -1.0, 20.0)
    regularizer: float = 1e-3

    dim = 1

    def _weights(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, 1)
        diff = x - np.asarray(self.centers)
        dist = np.abs(diff) + self.regularizer
        return diff, dist ** -2.0, dist

    def value(self, x):
        shape = np.shape(x)
        _, w, _ = self._weights(x)
        v = (w @ np.asarray(self.values)) / w.sum(axis=1)
        return v.reshape(shape[:-1] if shape and shape[-1] == 1 and len(shape) > 1 else shape)

    def gradient(self, x):
        """Analytic derivative; at a center ``sign(0) = 0`` gives the two-sided mean."""
        x = np.asarray(x, dtype=float)
        diff, w, dist = self._weights(x)
        u = np.asarray(self.values)
        total = w.sum(axis=1)
        v = (w @ u) / total
        dw = -2.0 * np.sign(diff) * dist ** -3.0
        g = (dw * (u - v[:, None])).sum(axis=1) / total
        return g.reshape(x.shape)


@dataclass(frozen=True)
class Potential2D:
    r"""Negative log of a Gaussian mixture, :math:`V(x) = -\log\sum_i p_i N(x|\mu_i, \Sigma_i)`."""

    weights: tuple = (0.25, 0.25, 0.5)
    means: tuple = ((0.0, -0.5), (-1.0, 0.5), (1.0, -0.5))
    covariances: tuple | None = None

    dim = 2

    def __post_init__(self):
        p = np.asarray(self.weights, dtype=float)
        if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-12:
            raise InputError("mixture weights must be positive and sum to 1")

    def _params(self):
        mu = np.asarray(self.means, dtype=float)
        k, d = mu.shape
        cov = np.broadcast_to(np.eye(d), (k, d, d)) if self.covariances is None else np.asarray(
            self.covariances, dtype=float
        )
        prec = np.linalg.inv(cov)
        logdet = np.linalg.slogdet(cov)[1]
        lognorm = np.log(np.asarray(self.weights)) - 0.5 * (d * np.log(2 * np.pi) + logdet)
        return mu, prec, lognorm

    def _components(self, x):
        mu, prec, lognorm = self._params()
        x = np.asarray(x, dtype=float).reshape(-1, mu.shape[1])
        diff = x[:, None, :] - mu[None]
        pd = np.einsum("kij,nkj->nki", prec, diff)
        logc = lognorm - 0.5 * np.einsum("nki,nki->nk", diff, pd)
        return logc, pd

    def value(self, x):
        x = np.asarray(x, dtype=float)
        logc, _ = self._components(x)
        return -logsumexp(logc, axis=1).reshape(x.shape[:-1])

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        logc, pd = self._components(x)
        resp = np.exp(logc - logsumexp(logc, axis=1, keepdims=True))
        return np.einsum("nk,nki->ni", resp, pd).reshape(x.shape)


@dataclass(frozen=True)
class QuadraticPotential:
    """``V(x) = x' K x / 2`` with a symmetric positive definite stiffness ``K``."""

    stiffness: tuple

    @property
    def dim(self):
        return np.asarray(self.stiffness).shape[0]

    def _flat(self, x):
        # 1D potentials also accept plain arrays of positions
        x = np.asarray(x, dtype=float)
        flat = self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1)
        return (x[..., None] if flat else x), flat

    def value(self, x):
        x, _ = self._flat(x)
        k = np.asarray(self.stiffness, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", x, k, x)

    def gradient(self, x):
        x, flat = self._flat(x)
        g = x @ np.asarray(self.stiffness, dtype=float)
        return g[..., 0] if flat else g


def benchmark_potential_1d():
    return Potential1D()


def benchmark_potential_2d():
    return Potential2D()


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    Parameters
    ----------
    beta : float
        Inverse temperature.
    dt : float
        Time between recorded samples.
    n_steps : int
        Recorded points per trajectory ``T``.
    n_traj : int
        Number of trajectories ``I``.
    init : tuple
        ``("uniform", lo, hi)`` with per-axis bounds, ``("point", x)``, or
        ``("boltzmann", lo, hi)`` for equilibrium starts drawn from the
        Boltzmann density on a grid over the box ``[lo, hi]``.
    seed : int, optional
    substeps : int
        Integrator steps per recorded sample.
    box : tuple, optional
        ``(lo, hi)`` per-axis bounds of a reflecting box, or ``None``.
    noise_scale : float
        Multiplies the noise term; ``0`` gives deterministic gradient descent.
    """

    beta: float = 0.3
    dt: float = 0.002
    n_steps: int = 1000
    n_traj: int = 100
    init: tuple = ("uniform", (0.0,), (0.2,))
    seed: int | None = None
    substeps: int = 1
    box: tuple | None = None
    noise_scale: float = 1.0
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (self.beta > 0 and self.dt > 0):
            raise InputError("beta and dt must be positive")
        if self.n_steps < 1 or self.n_traj < 1 or self.substeps < 1:
            raise InputError("n_steps, n_traj and substeps must be >= 1")
        if self.init[0] not in ("uniform", "point", "boltzmann"):
            raise InputError(f"unknown initial distribution {self.init[0]!r}")


def default_config_1d(**overrides):
    """Benchmark 1D setting: beta=0.3, dt=0.002, starts uniform on [0, 0.2], reflecting box [0, 2]."""
    base = dict(beta=0.3, dt=0.002, n_steps=1000, n_traj=100,
                init=("uniform", (0.0,), (0.2,)), box=((0.0,), (2.0,)))
    base.update(overrides)
    return SimConfig(**base)


def default_config_2d(**overrides):
    """Benchmark 2D setting: beta=2, dt=0.01, starts uniform on [-2, 0]^2."""
    base = dict(beta=2.0, dt=0.01, n_steps=1000, n_traj=100,
                init=("uniform", (-2.0, -2.0), (0.0, 0.0)), box=None)
    base.update(overrides)
    return SimConfig(**base)


def trajectory_rng(seed, index):
    """Random stream of trajectory ``index`` under master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(int(index),)))


def _reflect(x, lo, hi):
    width = hi - lo
    y = np.mod(x - lo, 2.0 * width)
    return lo + np.where(y > width, 2.0 * width - y, y)


def boltzmann_sampler(potential, beta, lo, hi, n_grid=None):
    """Sampler ``rng -> point`` for the Boltzmann density restricted to a box.

    The density is tabulated on a regular grid of cells; a draw picks a cell by
    its mass and then a uniform point inside it.
    """
    lo, hi = np.atleast_1d(np.asarray(lo, dtype=float)), np.atleast_1d(np.asarray(hi, dtype=float))
    d = lo.shape[0]
    n_grid = n_grid or (20000 if d == 1 else 400)
    edges = [np.linspace(a, b, n_grid + 1) for a, b in zip(lo, hi)]
    mids = np.meshgrid(*[0.5 * (e[:-1] + e[1:]) for e in edges], indexing="ij")
    pts = np.stack([m.ravel() for m in mids], axis=1)
    energy = potential.value(pts if d > 1 else pts[:, 0])
    logw = -beta * np.asarray(energy).ravel()
    prob = np.exp(logw - logw.max())
    prob /= prob.sum()
    cdf = np.cumsum(prob)
    cell = (hi - lo) / n_grid

    def draw(rng):
        j = min(int(np.searchsorted(cdf, rng.random(), side="right")), cdf.size - 1)
        return pts[j] + (rng.random(d) - 0.5) * cell

    return draw


def _initial_state(cfg, rng, sampler):
    kind = cfg.init[0]
    if kind == "uniform":
        lo, hi = np.asarray(cfg.init[1], dtype=float), np.asarray(cfg.init[2], dtype=float)
        return lo + (hi - lo) * rng.random(lo.shape[0])
    if kind == "point":
        return np.atleast_1d(np.asarray(cfg.init[1], dtype=float)).copy()
    return sampler(rng)


def simulate_trajectories(potential, cfg, obs=None):
    """Simulate ``cfg.n_traj`` independent trajectories of ``cfg.n_steps`` points.

    Each trajectory's stream draws the initial state first and then noise in
    fixed blocks, so trajectory ``i`` is identical whatever ``n_traj`` is.
    Trajectories that become non-finite are dropped and counted in
    ``n_aborted``.

    Parameters
    ----------
    potential : object with ``gradient`` and ``dim``
    cfg : SimConfig
    obs : callable, optional
        Observation map applied to the finished ``(n_traj, T, d)`` state array,
        e.g. :func:`well_indicator`. Returns ``(array, kind)``.
    """
    d = potential.dim
    seed = cfg.seed if cfg.seed is not None else 0
    rngs = [trajectory_rng(seed, i) for i in range(cfg.n_traj)]
    sampler = None
    if cfg.init[0] == "boltzmann":
        sampler = boltzmann_sampler(potential, cfg.beta, cfg.init[1], cfg.init[2])
    x = np.stack([_initial_state(cfg, r, sampler) for r in rngs]).reshape(cfg.n_traj, d)
    box = None
    if cfg.box is not None:
        box = (np.asarray(cfg.box[0], dtype=float), np.asarray(cfg.box[1], dtype=float))
        x = _reflect(x, *box)
    h = cfg.dt / cfg.substeps
    amp = np.sqrt(2.0 * h / cfg.beta) * cfg.noise_scale
    out = np.empty((cfg.n_traj, cfg.n_steps, d))
    out[:, 0] = x
    alive = np.ones(cfg.n_traj, dtype=bool)
    n_moves = (cfg.n_steps - 1) * cfg.substeps
    step = 0
    with np.errstate(all="ignore"):
        while step < n_moves:
            block = min(_NOISE_BLOCK, n_moves - step)
            noise = np.stack([r.standard_normal((block, d)) for r in rngs], axis=1)
            for k in range(block):
                x = x - potential.gradient(x) * h + amp * noise[k]
                if box is not None:
                    x = _reflect(x, *box)
                step += 1
                if step % cfg.substeps == 0:
                    out[:, step // cfg.substeps] = x
            bad = ~np.all(np.isfinite(x), axis=1)
            if np.any(bad):
                alive &= ~bad
                x[bad] = 0.0
    alive &= np.all(np.isfinite(out), axis=(1, 2))
    n_aborted = int(cfg.n_traj - alive.sum())
    kept = out[alive]
    meta = dict(cfg.metadata)
    meta.update(seed=str(seed), n_aborted=str(n_aborted))
    if obs is None:
        return TrajectoryDataset(list(kept), kind="continuous", dim=d, metadata=meta,
                                 n_aborted=n_aborted)
    values, kind = obs(kept)
    if kind == "discrete":
        return TrajectoryDataset(list(values), kind="discrete", metadata=meta, n_aborted=n_aborted)
    return TrajectoryDataset(list(values), kind="continuous", dim=values.shape[-1],
                             metadata=meta, n_aborted=n_aborted)


def find_minima_1d(potential, lo, hi, n_grid=20001):
    """Local minima of a 1D potential on ``[lo, hi]``: grid search, then bounded refinement."""
    xs = np.linspace(lo, hi, n_grid)
    v = potential.value(xs)
    idx = np.where((v[1:-1] < v[:-2]) & (v[1:-1] <= v[2:]))[0] + 1
    found = []
    for i in idx:
        res = minimize_scalar(lambda t: float(potential.value(np.array([t]))[0]),
                              bounds=(xs[i - 1], xs[i + 1]), method="bounded",
                              options={"xatol": 1e-12})
        found.append(float(res.x))
    return np.array(found)


def barrier_threshold(potential, lo=0.0, hi=2.0, n_grid=20001):
    """Barrier maximum between the two deepest minima of a 1D potential on ``[lo, hi]``."""
    minima = find_minima_1d(potential, lo, hi, n_grid)
    if minima.size < 2:
        raise InputError("need at least two local minima to place a barrier")
    depth = potential.value(minima)
    a, b = np.sort(minima[np.argsort(depth)[:2]])
    xs = np.linspace(a, b, n_grid)
    i = int(np.argmax(potential.value(xs)))
    lo_i, hi_i = xs[max(i - 1, 0)], xs[min(i + 1, n_grid - 1)]
    res = minimize_scalar(lambda t: -float(potential.value(np.array([t]))[0]),
                          bounds=(lo_i, hi_i), method="bounded", options={"xatol": 1e-12})
    return float(res.x)


def identity_map(states):
    return states, "continuous"


def well_indicator(threshold):
    """Observation map ``x -> 1`` in well I (``x < threshold``), ``0`` in well II."""

    def apply(states):
        return (states[..., 0] < threshold).astype(np.int64), "discrete"

    return apply
