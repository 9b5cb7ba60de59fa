"""Independent reference implementations used only by the tests.

Each one is written straight from the textbook definition, without sharing
code with the package.
"""
import numpy as np


def rts_smoother_rw(y, offset, load, var):
    """Kalman filter + Rauch-Tung-Striebel smoother for
    ``y_t = offset_t + load_t' s_t + e_t``, ``s_t = s_{t-1} + u_t``,
    ``s_0 = 0``, ``u_t ~ N(0, I)``, ``e_t ~ N(0, var_t)``.

    Returns smoothed means (T x K) and covariances (T x K x K).
    """
    T, K = load.shape
    m_f = np.zeros((T, K))
    P_f = np.zeros((T, K, K))
    P_p = np.zeros((T, K, K))
    m, P = np.zeros(K), np.zeros((K, K))
    for t in range(T):
        Pp = P + np.eye(K)
        P_p[t] = Pp
        z = load[t]
        S = z @ Pp @ z + var[t]
        gain = Pp @ z / S
        m = m + gain * (y[t] - offset[t] - z @ m)
        P = Pp - np.outer(gain, z @ Pp)
        m_f[t], P_f[t] = m, P
    m_s = m_f.copy()
    P_s = P_f.copy()
    for t in range(T - 2, -1, -1):
        G = P_f[t] @ np.linalg.inv(P_p[t + 1])
        m_s[t] = m_f[t] + G @ (m_s[t + 1] - m_f[t])
        P_s[t] = P_f[t] + G @ (P_s[t + 1] - P_p[t + 1]) @ G.T
    return m_s, P_s


def crps_naive(x, y):
    """O(S^2) double-sum CRPS estimator."""
    x = np.asarray(x, dtype=float)
    S = x.shape[0]
    return np.mean(np.abs(x - y)) - np.abs(x[:, None] - x[None, :]).sum() / (2 * S * S)


def crps_gaussian(mu, sigma, y):
    """Closed-form CRPS of N(mu, sigma^2) at y."""
    from scipy.stats import norm

    z = (y - mu) / sigma
    return sigma * (z * (2 * norm.cdf(z) - 1) + 2 * norm.pdf(z) - 1 / np.sqrt(np.pi))


def savs_scalar(a, norm_sq):
    """Soft threshold of one coefficient with penalty 1/a^2, written out in full."""
    if abs(a) ** 3 * norm_sq <= 1.0:  # covers a = 0 and avoids 1/a^2 overflow
        return 0.0
    mu = 1.0 / (a * a)
    shrunk = abs(a) * norm_sq - mu
    if shrunk <= 0:
        return 0.0
    return float(np.sign(a) * shrunk / norm_sq)


def savs_group(col, norm_sq):
    """Group soft threshold of one column with penalty 1/||col||^2."""
    n = float(np.sqrt(np.sum(np.square(col))))
    if n == 0:
        return np.zeros_like(col)
    kappa = 1.0 / (n * n)
    factor = 1.0 - kappa / (2.0 * norm_sq * n)
    if factor <= 0:
        return np.zeros_like(col)
    return np.asarray(col) * factor


def glasso_2x2_one_pass(S, lam):
    """One-pass graphical lasso for a 2 x 2 covariance: the off-diagonal of the
    working covariance is soft-thresholded once and the result inverted."""
    s12 = S[0, 1]
    w12 = np.sign(s12) * max(abs(s12) - lam, 0.0)
    W = np.array([[S[0, 0], w12], [w12, S[1, 1]]])
    return np.linalg.inv(W)


def vecm_beta_posterior_dense(dy, ax, w, alpha_paths, sinvhalf, s0):
    """Posterior precision and rhs for vec(beta') from the explicit stacked design."""
    T, q = w.shape
    r = alpha_paths.shape[2]
    rows_x, rows_y = [], []
    for t in range(T):
        G = sinvhalf[t] @ alpha_paths[t]
        rows_x.append(np.kron(w[t][None, :], G))
        rows_y.append(sinvhalf[t] @ (dy[t] - ax[t]))
    X = np.vstack(rows_x)
    Y = np.concatenate(rows_y)
    return X.T @ X + np.eye(q * r) / s0, X.T @ Y


def random_spd(M, rng, cond=50.0):
    Q, _ = np.linalg.qr(rng.standard_normal((M, M)))
    ev = np.exp(rng.uniform(0, np.log(cond), M))
    return (Q * ev) @ Q.T


def batch_means_se(x, n_batches=20):
    """Monte Carlo standard error of the mean of a correlated chain."""
    x = np.asarray(x, dtype=float)
    n = (x.shape[0] // n_batches) * n_batches
    b = x[:n].reshape(n_batches, -1).mean(axis=1)
    return b.std(ddof=1) / np.sqrt(n_batches)


def sv_single_site_mh(y, mu, phi, sigma, n_sweeps, rng, step=0.8):
    """Exact-likelihood single-site random-walk Metropolis for an AR(1)
    log-variance path with stationary initial state (``h_0`` included).

    ``y_t ~ N(0, exp(h_t))`` for t = 1..T.  Returns the n_sweeps x T draws of
    ``h_1..h_T``.
    """
    T = y.shape[0]
    s2 = sigma ** 2
    h = np.full(T + 1, mu)
    out = np.empty((n_sweeps, T))

    def logp_site(t, v):
        lp = 0.0
        if t == 0:
            lp += -0.5 * (1 - phi ** 2) * (v - mu) ** 2 / s2
        else:
            lp += -0.5 * (v - mu - phi * (h[t - 1] - mu)) ** 2 / s2
            lp += -0.5 * v - 0.5 * y[t - 1] ** 2 * np.exp(-v)
        if t < T:
            lp += -0.5 * (h[t + 1] - mu - phi * (v - mu)) ** 2 / s2
        return lp

    for s in range(n_sweeps):
        for t in range(T + 1):
            prop = h[t] + step * rng.standard_normal()
            if np.log(rng.random()) < logp_site(t, prop) - logp_site(t, h[t]):
                h[t] = prop
        out[s] = h[1:]
    return out
