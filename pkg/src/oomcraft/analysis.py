"""Reference values, estimators built on learned models, and the experiment harness.

The Boltzmann reference integrates ``exp(-beta V)`` on a grid and is the
ground truth every estimator is scored against. ``run_experiment`` repeats
simulate-fit-score over a grid of trajectory lengths at a fixed sample budget.
"""

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .errors import DimensionError, InputError, OomError, RegularizationError
from .model import BinSpec, binless_expectation_r1, binless_lagged_moment, coarse_grain_learn
from .simulate import (
    barrier_threshold,
    default_config_1d,
    default_config_2d,
    benchmark_potential_1d,
    benchmark_potential_2d,
    simulate_trajectories,
)
from .spectral import (
    LearnerConfig,
    binless_feature_maps,
    equilibrium_state,
    fit_binless,
    fit_discrete,
    fit_projection,
)
from .statistics import trajectory_windows

__all__ = [
    "BoltzmannReference",
    "boltzmann_reference",
    "empirical_estimator",
    "TicaResult",
    "tica_from_moments",
    "tica_from_binless",
    "tica_empirical",
    "binless_tica_streaming",
    "tica_oracle_2d",
    "binless_histogram",
    "empirical_histogram",
    "absolute_error",
    "eigenvector_error",
    "tv_distance",
    "error_metrics",
    "ExperimentPlan",
    "ResultRow",
    "run_experiment",
    "summarize",
    "FIGURES",
]


@dataclass(frozen=True)
class BoltzmannReference:
    """Normalized Boltzmann density on a regular grid and derived equilibrium values.

    ``axes`` holds one coordinate array per dimension and ``density`` has
    shape ``tuple(len(a) for a in axes)``. ``prob_i``/``prob_ii`` are only
    set for 1D references built with a threshold.
    """

    axes: tuple
    density: np.ndarray
    mean: np.ndarray
    c0: np.ndarray
    threshold: float | None = None
    prob_i: float | None = None
    prob_ii: float | None = None

    @property
    def well_difference(self):
        return self.prob_i - self.prob_ii

    def bin_probabilities(self, edges):
        """Probability mass of 1D bins with the given edges (inside the grid range)."""
        if len(self.axes) != 1:
            raise DimensionError("bin probabilities are only tabulated for 1D references")
        x = self.axes[0]
        cdf = cumulative_trapezoid(self.density, x, initial=0.0)
        return np.diff(np.interp(np.asarray(edges, dtype=float), x, cdf))


def _integrate(values, axes):
    out = values
    for ax in reversed(axes):
        out = trapezoid(out, ax, axis=-1)
    return out


def boltzmann_reference(potential, beta, lo, hi, n_grid=10001, threshold=None, refine_tol=1e-6):
    """Grid-integrated equilibrium density ``exp(-beta V) / Z`` on the box ``[lo, hi]``.

    Normalization uses the trapezoid rule. When dropping every second grid
    point changes ``Z`` by more than ``refine_tol`` (relative), a
    ``RuntimeWarning`` asks for a finer grid. With ``threshold`` (1D only) the
    well masses left and right of it are integrated on grids that contain the
    threshold as a node.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    d = lo.shape[0]
    axes = tuple(np.linspace(a, b, n_grid) for a, b in zip(lo, hi))
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    energy = np.asarray(potential.value(pts if d > 1 else pts[:, 0])).reshape(mesh[0].shape)
    shift = energy.min()
    weight = np.exp(-beta * (energy - shift))
    z = _integrate(weight, axes)
    coarse = _integrate(weight[(slice(None, None, 2),) * d], tuple(a[::2] for a in axes))
    if abs(coarse - z) > refine_tol * abs(z):
        warnings.warn(
            f"Boltzmann grid too coarse: normalization changes by {abs(coarse - z) / z:.2e} "
            "on refinement", RuntimeWarning, stacklevel=2,
        )
    density = weight / z
    mean = np.array([_integrate(density * m, axes) for m in mesh])
    c0 = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            c0[i, j] = _integrate(density * (mesh[i] - mean[i]) * (mesh[j] - mean[j]), axes)
    prob_i = prob_ii = None
    if threshold is not None:
        if d != 1:
            raise DimensionError("well probabilities are defined for 1D potentials only")

        def mass(a, b):
            xs = np.linspace(a, b, n_grid)
            return trapezoid(np.exp(-beta * (potential.value(xs) - shift)), xs) / z

        prob_i, prob_ii = mass(lo[0], threshold), mass(threshold, hi[0])
        total = prob_i + prob_ii
        prob_i, prob_ii = prob_i / total, prob_ii / total
    return BoltzmannReference(axes, density, mean, 0.5 * (c0 + c0.T), threshold, prob_i, prob_ii)


def empirical_estimator(dataset, g):
    """Plain average of ``g`` over every observation of every trajectory.

    ``g`` receives the concatenated observations (``(n,)`` symbols or
    ``(n, d)`` points) and returns one value (or row) per observation.
    """
    if len(dataset) == 0 or dataset.n_samples == 0:
        raise InputError("cannot average over an empty dataset")
    values = np.asarray(g(dataset.concatenated()), dtype=float)
    return float(values.mean()) if values.ndim == 1 else values.mean(axis=0)


@dataclass(frozen=True)
class TicaResult:
    c0: np.ndarray
    c_tau: np.ndarray
    w: np.ndarray
    eigenvalue: float
    tau: int
    mean: np.ndarray


def _sign_convention(w):
    nz = np.flatnonzero(np.abs(w) > 0)
    if nz.size and w[nz[0]] < 0:
        return -w
    return w


def tica_from_moments(mean, second, lagged, tau, rtol=1e-12):
    """Leading TICA pair from raw moments ``E[x x']`` and ``E[x_t x_{t+tau}']``.

    Both are mean-centered; the lagged covariance is symmetrized. The problem
    ``C_tau w = lambda C0 w`` is solved by Cholesky whitening of ``C0``.
    ``w`` has unit Euclidean norm and a positive first nonzero entry.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    outer = np.outer(mean, mean)
    c0 = np.atleast_2d(second) - outer
    c0 = 0.5 * (c0 + c0.T)
    ct = np.atleast_2d(lagged) - outer
    ct = 0.5 * (ct + ct.T)
    evals = np.linalg.eigvalsh(c0)
    if evals[0] <= rtol * max(evals[-1], 0.0) or evals[-1] <= 0:
        raise RegularizationError(
            f"C0 is singular or indefinite (eigenvalues {evals[0]:.3e} .. {evals[-1]:.3e})"
        )
    try:
        chol = np.linalg.cholesky(c0)
    except np.linalg.LinAlgError as err:
        raise RegularizationError(f"Cholesky factorization of C0 failed: {err}") from None
    inv = np.linalg.inv(chol)
    white = inv @ ct @ inv.T
    lam, vec = np.linalg.eigh(0.5 * (white + white.T))
    w = inv.T @ vec[:, -1]
    w = _sign_convention(w / np.linalg.norm(w))
    return TicaResult(c0=c0, c_tau=ct, w=w, eigenvalue=float(lam[-1]), tau=int(tau), mean=mean)


def _identity(points):
    return points


def tica_from_binless(b, tau):
    """TICA with equilibrium moments taken from a binless OOM."""
    if tau < 1:
        raise InputError("TICA lag must be >= 1")
    mean = binless_expectation_r1(b, _identity)
    second = binless_lagged_moment(b, _identity, _identity, 0)
    lagged = binless_lagged_moment(b, _identity, _identity, tau)
    return tica_from_moments(mean, second, lagged, tau)


def tica_empirical(dataset, tau):
    """TICA with moments averaged over all observations and all lag-``tau`` pairs."""
    if tau < 1:
        raise InputError("TICA lag must be >= 1")
    x = dataset.concatenated()
    mean = x.mean(axis=0)
    second = x.T @ x / x.shape[0]
    num = np.zeros((x.shape[1], x.shape[1]))
    count = 0
    for traj in dataset:
        if traj.shape[0] > tau:
            num += traj[:-tau].T @ traj[tau:]
            count += traj.shape[0] - tau
    if count == 0:
        raise InputError(f"no trajectory is longer than the lag {tau}")
    return tica_from_moments(mean, second, num / count, tau)


def _chunks(dataset, L, size=20000):
    for traj in dataset:
        pieces = trajectory_windows(traj, L)
        if pieces is None:
            continue
        prefix, mid, suffix, midblock = pieces
        for s in range(0, prefix.shape[0], size):
            sl = slice(s, s + size)
            yield prefix[sl], mid[sl], suffix[sl], midblock[sl]


def binless_tica_streaming(dataset, phi1, phi2, cfg, tau):
    """Binless TICA in two passes without storing per-window factors.

    Equivalent to ``tica_from_binless(fit_binless(...), tau)`` but uses
    ``O(d^2 m^2)`` memory, so it scales to very long runs. The first pass
    collects the moments for the projection; the second accumulates
    ``sum_n x_n (x) a_n (x) b_n`` and ``sum_n x_n x_n' (x) a_n (x) b_n``,
    from which all equilibrium moments follow by contraction.
    """
    d1 = phi1.dimension
    s1 = np.zeros(d1)
    c12 = np.zeros((d1, phi2.dimension))
    n = 0
    for prefix, _, _, midblock in _chunks(dataset, cfg.L):
        f1 = phi1.evaluate_many(prefix)
        s1 += f1.sum(axis=0)
        c12 += f1.T @ phi2.evaluate_many(midblock)
        n += prefix.shape[0]
    if n == 0:
        raise InputError("no windows in dataset")
    proj = fit_projection(c12 / n, cfg.m, cfg.svd_floor)
    sigma = proj.f1.T @ (s1 / n)
    m, dim = cfg.m, dataset.dim
    xi = np.zeros((m, m))
    mx = np.zeros((dim, m, m))
    mxx = np.zeros((dim, dim, m, m))
    scale = 1.0 / math.sqrt(n)
    for prefix, mid, suffix, _ in _chunks(dataset, cfg.L):
        a = phi1.evaluate_many(prefix) @ proj.f1 * scale
        b = phi2.evaluate_many(suffix) @ proj.f2 * scale
        x = np.asarray(mid, dtype=float).reshape(a.shape[0], dim)
        ab = (a[:, :, None] * b[:, None, :]).reshape(a.shape[0], m * m)
        xx = (x[:, :, None] * x[:, None, :]).reshape(a.shape[0], dim * dim)
        xi += a.T @ b
        mx += (x.T @ ab).reshape(dim, m, m)
        mxx += (xx.T @ ab).reshape(dim, dim, m, m)
    omega = equilibrium_state(xi, sigma)
    mean = mx @ sigma @ omega
    second = mxx @ sigma @ omega
    left = np.einsum("i,pij->pj", omega, mx)
    right = mx @ sigma
    lagged = left @ np.linalg.matrix_power(xi, tau - 1) @ right.T
    return tica_from_moments(mean, second, lagged, tau)


def binless_histogram(b, bins):
    """Stationary bin weights from binless point weights; negative weights are kept."""
    idx = bins.assign(b.points)
    return np.bincount(idx, weights=b.weights(), minlength=bins.n_bins)


def empirical_histogram(dataset, bins):
    idx = bins.assign(dataset.concatenated())
    return np.bincount(idx, minlength=bins.n_bins) / idx.shape[0]


def absolute_error(estimate, oracle):
    return float(abs(estimate - oracle))


def eigenvector_error(w, w_ref):
    """Euclidean error after aligning the sign of ``w`` with ``w_ref``."""
    w, w_ref = np.asarray(w, dtype=float), np.asarray(w_ref, dtype=float)
    return float(min(np.linalg.norm(w - w_ref), np.linalg.norm(w + w_ref)))


def tv_distance(p, q):
    return float(0.5 * np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)).sum())


def error_metrics(estimate, oracle, kind="scalar"):
    """Dispatch on ``kind``: ``"scalar"``, ``"eigenvector"`` or ``"histogram"``."""
    if kind == "scalar":
        return absolute_error(estimate, oracle)
    if kind == "eigenvector":
        return eigenvector_error(estimate, oracle)
    if kind == "histogram":
        return tv_distance(estimate, oracle)
    raise InputError(f"unknown error kind {kind!r}")


FIGURES = {
    "2b": ("plain-oom", "eq-oom", "empirical"),
    "2c": ("binless-oom", "empirical", "coarse-grained"),
    "2d": ("binless-oom", "empirical", "coarse-grained"),
    "3b": ("binless-oom", "empirical"),
}


@dataclass(frozen=True)
class ExperimentPlan:
    """Grid of trajectory lengths, each run ``repeats`` times at ``I = budget // T``.

    ``learner`` configures the OOM learners; for figure ``2b`` the indicator
    features force ``D = 2**L``. The coarse-grained estimator uses
    ``coarse_bins`` uniform bins and ``coarse_L``.
    """

    t_grid: tuple = (50, 100, 200, 300, 500, 1000)
    budget: int = 100_000
    repeats: int = 30
    estimators: tuple | None = None
    seed: int = 0
    threads: int = 1
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    discrete_m: int = 4
    coarse_bins: int = 100
    coarse_L: int = 1
    hist_bins: int = 100
    tau: int = 100
    oracle_trajectories: int = 100
    oracle_steps: int = 100_000

    def __post_init__(self):
        if self.repeats < 1:
            raise InputError("repeats must be >= 1")
        if not self.t_grid or self.budget <= max(self.t_grid):
            raise InputError("budget must exceed every trajectory length")
        if self.threads < 1:
            raise InputError("threads must be >= 1")


@dataclass(frozen=True)
class ResultRow:
    T: int
    estimator: str
    repeat: int
    value: float
    error: float


_ORACLE_CACHE = {}


def _oracle_1d():
    if "1d" not in _ORACLE_CACHE:
        pot = benchmark_potential_1d()
        thr = barrier_threshold(pot)
        _ORACLE_CACHE["1d"] = boltzmann_reference(pot, 0.3, 0.0, 2.0, threshold=thr)
    return _ORACLE_CACHE["1d"]


def tica_oracle_2d(plan):
    """Leading TIC of the 2D benchmark from long equilibrium-start runs.

    Uses ``oracle_trajectories`` runs of ``oracle_steps`` points each, started
    from the Boltzmann density, learned with the streaming binless estimator.
    """
    key = ("2d", plan.seed, plan.oracle_trajectories, plan.oracle_steps, plan.tau, plan.learner)
    if key not in _ORACLE_CACHE:
        seed = int(np.random.SeedSequence(entropy=plan.seed, spawn_key=(2**31,)).generate_state(1)[0])
        cfg = default_config_2d(
            n_steps=plan.oracle_steps, n_traj=plan.oracle_trajectories,
            init=("boltzmann", (-5.0, -5.0), (5.0, 5.0)), seed=seed,
        )
        data = simulate_trajectories(benchmark_potential_2d(), cfg)
        # the feature maps must be seeded too, or the oracle differs between processes
        lcfg = replace(plan.learner, seed=seed)
        sub = type(data)(data.trajectories[: min(10, len(data))], kind="continuous", dim=2)
        phi1, phi2 = binless_feature_maps(sub, lcfg)
        _ORACLE_CACHE[key] = binless_tica_streaming(data, phi1, phi2, lcfg, plan.tau)
    return _ORACLE_CACHE[key]


def _cell_seed(plan, t_index, repeat):
    return int(np.random.SeedSequence(entropy=plan.seed, spawn_key=(t_index, repeat)).generate_state(1)[0])


def _cell_1d(plan, figure, T, seed, estimators, hook):
    oracle = _oracle_1d()
    thr = oracle.threshold
    n_traj = plan.budget // T
    cfg = default_config_1d(n_steps=T, n_traj=n_traj, seed=seed)
    data = simulate_trajectories(benchmark_potential_1d(), cfg)
    out = {}
    if figure == "2b":
        symbols = data.map(lambda t: (t[:, 0] < thr).astype(np.int64), kind="discrete")
        symbols.metadata["alphabet_size"] = 2
        lc = plan.learner
        cfg_d = LearnerConfig(m=plan.discrete_m, L=lc.L, D1=2**lc.L, D2=2**lc.L, svd_floor=lc.svd_floor)
        target = oracle.well_difference
        for est in estimators:
            def run(est=est):
                if est == "empirical":
                    p1 = empirical_estimator(symbols, lambda y: y == 1)
                else:
                    oom = fit_discrete(symbols, cfg_d, equilibrium=(est == "eq-oom"), alphabet_size=2)
                    hook(T, est, oom)
                    p1 = oom.probability((1,))
                return 2.0 * p1 - 1.0, None
            out[est] = (run, target, "scalar")
        return out
    bins = BinSpec.uniform(0.0, 2.0, plan.hist_bins)
    ref_hist = oracle.bin_probabilities(bins.edges[0])
    lcfg = replace(plan.learner, seed=seed)

    def sign_fn(z):
        return np.where(z[:, 0] < thr, 1.0, -1.0)

    for est in estimators:
        def run(est=est):
            if est == "binless-oom":
                b = fit_binless(data, lcfg)
                hook(T, est, b)
                if figure == "2c":
                    return binless_expectation_r1(b, sign_fn), None
                return None, binless_histogram(b, bins)
            if est == "empirical":
                if figure == "2c":
                    return empirical_estimator(data, sign_fn), None
                return None, empirical_histogram(data, bins)
            cbins = BinSpec.uniform(0.0, 2.0, plan.coarse_bins)
            ccfg = LearnerConfig(m=lcfg.m, L=plan.coarse_L, D1=plan.coarse_bins**plan.coarse_L,
                                 D2=plan.coarse_bins**plan.coarse_L, svd_floor=lcfg.svd_floor)
            coarse = coarse_grain_learn(data, cbins, ccfg)
            hook(T, est, coarse)
            probs = coarse.bin_probabilities()
            if figure == "2c":
                left = cbins.centers()[:, 0] < thr
                return float(probs[left].sum() - probs[~left].sum()), None
            # redistribute coarse bins onto the histogram grid by overlap
            return None, _rebin(probs, cbins.edges[0], bins.edges[0])
        if figure == "2c":
            out[est] = (run, oracle.well_difference, "scalar")
        else:
            out[est] = (run, ref_hist, "histogram")
    return out


def _rebin(probs, src_edges, dst_edges):
    cdf = np.concatenate([[0.0], np.cumsum(probs)])
    return np.diff(np.interp(dst_edges, src_edges, cdf))


def _cell_2d(plan, T, seed, estimators, hook):
    oracle = tica_oracle_2d(plan)
    n_traj = plan.budget // T
    cfg = default_config_2d(n_steps=T, n_traj=n_traj, seed=seed)
    data = simulate_trajectories(benchmark_potential_2d(), cfg)
    lcfg = replace(plan.learner, seed=seed)
    out = {}
    for est in estimators:
        def run(est=est):
            if est == "binless-oom":
                b = fit_binless(data, lcfg)
                hook(T, est, b)
                res = tica_from_binless(b, plan.tau)
            else:
                res = tica_empirical(data, plan.tau)
            return res.eigenvalue, res.w
        out[est] = (run, oracle.w, "eigenvector")
    return out


def _run_cell(plan, figure, t_index, repeat, estimators, model_hook=None):
    T = plan.t_grid[t_index]
    seed = _cell_seed(plan, t_index, repeat)

    def hook(T, est, model):
        if model_hook is not None:
            model_hook(T, repeat, est, model)

    if figure == "3b":
        jobs = _cell_2d(plan, T, seed, estimators, hook)
    else:
        jobs = _cell_1d(plan, figure, T, seed, estimators, hook)
    rows = []
    for est in estimators:
        run, target, kind = jobs[est]
        try:
            value, vec = run()
            if kind == "scalar":
                err = error_metrics(value, target)
            elif kind == "histogram":
                err = error_metrics(vec, target, "histogram")
                value = err
            else:
                err = error_metrics(vec, target, "eigenvector")
        except (OomError, np.linalg.LinAlgError):
            value, err = math.nan, math.nan
        rows.append(ResultRow(T, est, repeat, float(value), float(err)))
    return rows


def run_experiment(plan, figure, model_hook=None):
    """Run every (T, repeat) cell of ``plan`` for one figure analogue.

    Each cell simulates its own dataset from a seed derived from
    ``(plan.seed, T index, repeat)`` and scores all estimators on it. A failed
    fit is recorded as a NaN cell. Rows come back ordered by T index, repeat
    and estimator, independent of ``plan.threads``.

    ``model_hook(T, repeat, estimator, model)``, if given, sees every fitted
    model; it may be called from worker threads.

    The ``value`` column holds the estimated Prob_I - Prob_II for ``2b``/``2c``,
    the TV distance for ``2d`` and the leading TICA eigenvalue for ``3b``.
    """
    if figure not in FIGURES:
        raise InputError(f"unknown figure {figure!r}; expected one of {sorted(FIGURES)}")
    estimators = tuple(plan.estimators or FIGURES[figure])
    unknown = set(estimators) - set(FIGURES[figure])
    if unknown:
        raise InputError(f"estimators {sorted(unknown)} are not available for figure {figure}")
    if figure == "3b":
        tica_oracle_2d(plan)
    else:
        _oracle_1d()
    cells = [(ti, r) for ti in range(len(plan.t_grid)) for r in range(plan.repeats)]
    if plan.threads == 1:
        results = [_run_cell(plan, figure, ti, r, estimators, model_hook) for ti, r in cells]
    else:
        with ThreadPoolExecutor(max_workers=plan.threads) as pool:
            results = list(pool.map(
                lambda c: _run_cell(plan, figure, c[0], c[1], estimators, model_hook), cells))
    return [row for rows in results for row in rows]


def summarize(rows):
    """Mean and standard deviation of the error per (T, estimator), NaN cells excluded."""
    groups = {}
    for row in rows:
        groups.setdefault((row.T, row.estimator), []).append(row.error)
    out = []
    for (T, est), errs in groups.items():
        e = np.asarray(errs, dtype=float)
        e = e[np.isfinite(e)]
        mean = float(e.mean()) if e.size else math.nan
        std = float(e.std(ddof=1)) if e.size > 1 else (0.0 if e.size else math.nan)
        out.append((T, est, mean, std, int(e.size)))
    return out
