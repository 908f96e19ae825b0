"""Shared independent oracles for the test suite.

Everything here is deliberately implemented with different algorithms than the
package uses (bisection instead of sort-based projection, explicit series
summation instead of linear solves, plain loops instead of the package's
vectorized samplers) so that agreement between the two is meaningful.
"""

import numpy as np


def make_spd(rng, n, eig_low=0.5, eig_high=2.0):
    """Random well-conditioned symmetric positive definite matrix."""
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return q @ np.diag(rng.uniform(eig_low, eig_high, n)) @ q.T


def simplex_project_bisection(v, iters=200):
    """Project one vector onto the probability simplex by bisecting on the
    shift tau in sum_i max(v_i - tau, 0) = 1."""
    v = np.asarray(v, dtype=float)
    lo = v.min() - 1.0
    hi = v.max()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.maximum(v - mid, 0.0).sum() > 1.0:
            lo = mid
        else:
            hi = mid
    return np.maximum(v - 0.5 * (lo + hi), 0.0)


def simplex_project_rows_exact(mat):
    """Row-wise simplex projection via explicit candidate thresholds: for each
    prefix length r of the descending sort, tau_r = (prefix_sum - 1)/r is valid
    when the r-th largest entry still exceeds it; the largest valid prefix wins."""
    mat = np.asarray(mat, dtype=float)
    flat = mat.reshape(-1, mat.shape[-1])
    srt = np.sort(flat, axis=1)[:, ::-1]
    counts = np.arange(1, flat.shape[1] + 1)
    tau_cand = (np.cumsum(srt, axis=1) - 1.0) / counts
    support = (srt > tau_cand).sum(axis=1)
    tau = np.take_along_axis(tau_cand, support[:, None] - 1, axis=1)
    return np.maximum(flat - tau, 0.0).reshape(mat.shape)


def pg_nonneg_batch(G, A, n_steps, step_size):
    """Projected gradient for min ||G K - A||_F^2 over K >= 0, batched over
    leading axis. Returns the iterate after n_steps."""
    K = np.maximum(np.linalg.pinv(G) @ A, 0.0)
    GT = np.swapaxes(G, -1, -2)
    for _ in range(n_steps):
        K = np.maximum(K - step_size * (GT @ (G @ K - A)), 0.0)
    return K


def pg_rowstoch_batch(G, A, Lam, n_steps, step_size):
    """Projected gradient for min ||G Lam^-1 P Lam - A||_F^2 over row-stochastic
    P, batched over leading axis. Returns the iterate after n_steps."""
    Lam_inv = np.linalg.inv(Lam)
    B = G @ Lam_inv
    BT = np.swapaxes(B, -1, -2)
    LamT = np.swapaxes(Lam, -1, -2)
    P = simplex_project_rows_exact(Lam @ np.linalg.pinv(G) @ A @ Lam_inv)
    for _ in range(n_steps):
        grad = BT @ (B @ P @ Lam - A) @ LamT
        P = simplex_project_rows_exact(P - step_size * grad)
    return P


def neumann_series(m, P1, max_terms=10**6):
    """Sum m (I + P1 + P1^2 + ...) term by term until the terms vanish."""
    m = np.asarray(m, dtype=float)
    u = m.copy()
    term = m.copy()
    for _ in range(max_terms):
        term = term @ P1
        u += term
        if np.abs(term).max() < 1e-17 * max(1.0, np.abs(u).max()):
            break
    return u


def simulate_chain(T, n_steps, seed, x0=0):
    """Sample a Markov chain path from row-stochastic transition matrix T."""
    T = np.asarray(T, dtype=float)
    cum = np.cumsum(T, axis=1)
    rng = np.random.default_rng(seed)
    draws = rng.random(n_steps)
    path = np.empty(n_steps + 1, dtype=np.intp)
    path[0] = x0
    for k in range(n_steps):
        path[k + 1] = np.searchsorted(cum[path[k]], draws[k], side="right")
    return path


def henon_orbit(n_points, burn=1000, x0=(0.1, 0.1)):
    """Plain-loop Henon iteration, returns (n_points, 2) post-transient states."""
    x, y = x0
    for _ in range(burn):
        x, y = 1.0 - 1.4 * x * x + y, 0.3 * x
    out = np.empty((n_points, 2))
    for k in range(n_points):
        x, y = 1.0 - 1.4 * x * x + y, 0.3 * x
        out[k] = (x, y)
    return out


def vanderpol_orbit(n_points, dt=0.05, burn_time=30.0, x0=(1.0, 0.0)):
    """Van der Pol limit cycle samples from scipy's adaptive integrator."""
    from scipy.integrate import solve_ivp

    def f(_, s):
        return [s[1], (1.0 - s[0] ** 2) * s[1] - s[0]]

    t_eval = burn_time + dt * np.arange(n_points)
    sol = solve_ivp(f, (0.0, t_eval[-1]), list(x0), t_eval=t_eval,
                    rtol=1e-10, atol=1e-12, max_step=0.1)
    return sol.y.T
