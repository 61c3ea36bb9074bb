"""Slow, independent reference implementations used only by the tests."""

import numpy as np


def jacobi_svd(a, tol=1e-15, max_sweeps=100):
    """One-sided Jacobi SVD. Returns ``(u, s, v)`` with ``s`` sorted descending.

    Column pairs are rotated until all are mutually orthogonal; the column
    norms are then the singular values. Shares no code with LAPACK's gesdd.
    """
    a = np.array(a, dtype=float)
    transposed = a.shape[0] < a.shape[1]
    if transposed:
        a = a.T
    n = a.shape[1]
    u = a.copy()
    v = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = u[:, p] @ u[:, p]
                beta = u[:, q] @ u[:, q]
                gamma = u[:, p] @ u[:, q]
                if abs(gamma) <= tol * np.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta)) if zeta != 0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                up, uq = u[:, p].copy(), u[:, q].copy()
                u[:, p], u[:, q] = c * up - s * uq, s * up + c * uq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p], v[:, q] = c * vp - s * vq, s * vp + c * vq
        if not rotated:
            break
    sv = np.linalg.norm(u, axis=0)
    order = np.argsort(-sv, kind="stable")
    sv, u, v = sv[order], u[:, order], v[:, order]
    nz = sv > 0
    u[:, nz] = u[:, nz] / sv[nz]
    if transposed:
        return v, sv, u
    return u, sv, v


def equilibrium_objective(w, xi_total):
    r = w @ (np.asarray(xi_total) - np.eye(len(w)))
    return float(r @ r)


def projected_gradient_equilibrium(xi_total, sigma, max_iters=200_000, tol=1e-14):
    """Minimize ``||w (Xi - I)||^2`` over the hyperplane ``w . sigma = 1``.

    Accelerated projected gradient with function-value restart and step
    ``1 / L``, ``L = 2 ||Xi - I||_2^2``. Accepts a batch: ``xi_total`` of shape
    ``(B, m, m)`` with ``sigma`` of shape ``(B, m)``.
    """
    xi_total = np.asarray(xi_total, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    single = xi_total.ndim == 2
    if single:
        xi_total, sigma = xi_total[None], sigma[None]
    m = sigma.shape[1]
    a = xi_total - np.eye(m)
    h = a @ np.swapaxes(a, 1, 2)
    lip = 2.0 * np.linalg.norm(a, 2, axis=(1, 2)) ** 2
    ss = np.einsum("bi,bi->b", sigma, sigma)

    def project(w):
        return w - ((np.einsum("bi,bi->b", w, sigma) - 1.0) / ss)[:, None] * sigma

    def f(w):
        return np.einsum("bi,bij,bj->b", w, h, w)

    w = project(np.zeros_like(sigma))
    y = w.copy()
    t = np.ones(len(sigma))
    fw = f(w)
    active = np.ones(len(sigma), dtype=bool)
    for _ in range(max_iters):
        w_new = project(y - 2.0 * np.einsum("bij,bj->bi", h, y) / lip[:, None])
        f_new = f(w_new)
        restart = f_new > fw
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y_acc = w_new + ((t - 1.0) / t_new)[:, None] * (w_new - w)
        step = np.max(np.abs(w_new - w), axis=1)
        keep = active & ~restart
        # restarted instances drop their momentum and retry from the last iterate
        y = np.where(restart[:, None], w, np.where(keep[:, None], y_acc, y))
        t = np.where(restart, 1.0, np.where(keep, t_new, t))
        w = np.where(keep[:, None], w_new, w)
        fw = np.where(keep, f_new, fw)
        active &= ~(keep & (step < tol))
        if not active.any():
            break
    return w[0] if single else w


def sample_markov_chain(p, length, rng, x0=None, n_traj=1):
    """Sample ``n_traj`` chains of ``length``; ``x0=None`` starts from stationarity."""
    p = np.asarray(p, dtype=float)
    k = p.shape[0]
    cdf = np.cumsum(p, axis=1)
    if x0 is None:
        pi = stationary_distribution(p)
        start = rng.choice(k, size=n_traj, p=pi)
    else:
        start = np.full(n_traj, x0)
    x = np.empty((n_traj, length), dtype=np.int64)
    x[:, 0] = start
    u = rng.random((n_traj, length))
    for t in range(1, length):
        x[:, t] = np.minimum((u[:, t, None] > cdf[x[:, t - 1]]).sum(axis=1), k - 1)
    return x


def stationary_distribution(p):
    """Solve ``pi P = pi``, ``sum(pi) = 1`` as a least-squares linear system."""
    p = np.asarray(p, dtype=float)
    k = p.shape[0]
    lhs = np.vstack([p.T - np.eye(k), np.ones(k)])
    rhs = np.concatenate([np.zeros(k), [1.0]])
    return np.linalg.lstsq(lhs, rhs, rcond=None)[0]


def chain_sequence_probability(p, seq):
    pi = stationary_distribution(p)
    prob = pi[seq[0]]
    for a, b in zip(seq[:-1], seq[1:]):
        prob *= p[a, b]
    return prob


def brute_force_lagged_moment(b, f, g):
    """``sum_n sum_k f(z_n) g(z_k)' omega W_n W_k sigma`` by explicit double loop."""
    fv = np.atleast_2d(np.asarray(f(b.points), dtype=float).T).T
    gv = np.atleast_2d(np.asarray(g(b.points), dtype=float).T).T
    out = np.zeros((fv.shape[1], gv.shape[1]))
    for n in range(b.n_points):
        wn = b.omega @ np.outer(b.left[n], b.right[n])
        for k in range(b.n_points):
            val = wn @ np.outer(b.left[k], b.right[k]) @ b.sigma
            out += val * np.outer(fv[n], gv[k])
    return out
