"""Compiled inner loops: Kalman filtering/backward sampling and the graphical
lasso coordinate descent.  Random numbers are always drawn by the caller so
the kernels are deterministic functions of their inputs.
"""
import numpy as np
from numba import njit

JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


@njit(cache=True)
def _cholesky_into(A, L):
    n = A.shape[0]
    for j in range(n):
        s = A[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not (s > 0.0):
            return False
        L[j, j] = np.sqrt(s)
        for i in range(j + 1, n):
            s = A[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
        for i in range(j):
            L[i, j] = 0.0
    return True


@njit(cache=True)
def cholesky_jitter(A, L):
    """Lower Cholesky factor of ``A`` with an escalating diagonal jitter.

    Returns the ladder level used, or -1 when every level failed.
    """
    n = A.shape[0]
    scale = 0.0
    for i in range(n):
        scale += abs(A[i, i])
    scale = scale / n if n > 0 else 1.0
    if scale == 0.0:
        scale = 1.0
    B = A.copy()
    ladder = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
    for lev in range(len(ladder)):
        for i in range(n):
            B[i, i] = A[i, i] + ladder[lev] * scale
        if _cholesky_into(B, L):
            return lev
    return -1


@njit(cache=True)
def kalman_filter_rw(y, offset, load, v):
    """Forward filter for ``y_t = offset_t + load_t' s_t + e_t``, ``e_t ~ N(0, v_t)``,
    ``s_t = s_{t-1} + u_t``, ``u_t ~ N(0, I)``, ``s_0 = 0``.

    Returns filtered means (T x K) and covariances (T x K x K).
    """
    T, K = load.shape
    m = np.zeros((T, K))
    P = np.zeros((T, K, K))
    a = np.zeros(K)
    Pp = np.zeros((K, K))
    R = np.empty((K, K))
    Rl = np.empty(K)
    for t in range(T):
        for i in range(K):
            for j in range(K):
                R[i, j] = 0.5 * (Pp[i, j] + Pp[j, i])
            R[i, i] += 1.0
        f = v[t]
        pred = offset[t]
        for i in range(K):
            acc = 0.0
            for j in range(K):
                acc += R[i, j] * load[t, j]
            Rl[i] = acc
            f += load[t, i] * acc
            pred += load[t, i] * a[i]
        err = y[t] - pred
        for i in range(K):
            g = Rl[i] / f
            a[i] = a[i] + g * err
            for j in range(K):
                Pp[i, j] = R[i, j] - g * Rl[j]
        m[t] = a
        for i in range(K):
            for j in range(K):
                P[t, i, j] = 0.5 * (Pp[i, j] + Pp[j, i])
    return m, P


@njit(cache=True)
def backward_sample_rw(m, P, z):
    """Backward pass for the random-walk model filtered by :func:`kalman_filter_rw`.

    ``z`` holds T x K standard normals.  Returns ``(states, bad_t)``; ``bad_t``
    is -1 on success or the time index whose covariance could not be factored.
    """
    T, K = m.shape
    s = np.zeros((T, K))
    L = np.zeros((K, K))
    Lr = np.zeros((K, K))
    lev = cholesky_jitter(P[T - 1], L)
    if lev < 0:
        return s, T - 1
    for i in range(K):
        acc = m[T - 1, i]
        for j in range(i + 1):
            acc += L[i, j] * z[T - 1, j]
        s[T - 1, i] = acc
    R = np.empty((K, K))
    X = np.empty((K, K))
    C = np.empty((K, K))
    d = np.empty(K)
    mean = np.empty(K)
    for t in range(T - 2, -1, -1):
        Pt = P[t]
        for i in range(K):
            for j in range(K):
                R[i, j] = Pt[i, j]
            R[i, i] += 1.0
        ok = _cholesky_into(R, Lr)
        if not ok:
            return s, t
        # X = R^{-1} P_t via two triangular solves per column
        for col in range(K):
            for i in range(K):
                acc = Pt[i, col]
                for k in range(i):
                    acc -= Lr[i, k] * X[k, col]
                X[i, col] = acc / Lr[i, i]
            for i in range(K - 1, -1, -1):
                acc = X[i, col]
                for k in range(i + 1, K):
                    acc -= Lr[k, i] * X[k, col]
                X[i, col] = acc / Lr[i, i]
        # mean = m_t + X' (s_{t+1} - m_t); cov = P_t - P_t X
        for i in range(K):
            d[i] = s[t + 1, i] - m[t, i]
        for i in range(K):
            acc = m[t, i]
            for k in range(K):
                acc += X[k, i] * d[k]
            mean[i] = acc
        for i in range(K):
            for j in range(K):
                acc = Pt[i, j]
                for k in range(K):
                    acc -= Pt[i, k] * X[k, j]
                C[i, j] = acc
        for i in range(K):
            for j in range(i):
                avg = 0.5 * (C[i, j] + C[j, i])
                C[i, j] = avg
                C[j, i] = avg
        lev = cholesky_jitter(C, L)
        if lev < 0:
            return s, t
        for i in range(K):
            acc = mean[i]
            for j in range(i + 1):
                acc += L[i, j] * z[t, j]
            s[t, i] = acc
    return s, -1


@njit(cache=True)
def ffbs_ar1(obs, obs_var, mu, phi, sig2, z):
    """Draw ``x_0..x_T`` of a stationary AR(1) observed with noise at t = 1..T.

    ``obs`` and ``obs_var`` have length T (``inf`` variance = missing);
    ``z`` holds T + 1 standard normals.  Returns the path of length T + 1.
    """
    T = obs.shape[0]
    m = np.empty(T + 1)
    P = np.empty(T + 1)
    m[0] = mu
    P[0] = sig2 / (1.0 - phi * phi)
    for t in range(1, T + 1):
        a = mu + phi * (m[t - 1] - mu)
        R = phi * phi * P[t - 1] + sig2
        V = obs_var[t - 1]
        if np.isinf(V):
            m[t] = a
            P[t] = R
        else:
            g = R / (R + V)
            m[t] = a + g * (obs[t - 1] - a)
            P[t] = R * V / (R + V)
    x = np.empty(T + 1)
    x[T] = m[T] + np.sqrt(P[T]) * z[T]
    for t in range(T - 1, -1, -1):
        R = phi * phi * P[t] + sig2
        J = P[t] * phi / R
        mean = m[t] + J * (x[t + 1] - mu - phi * (m[t] - mu))
        var = P[t] * sig2 / R
        x[t] = mean + np.sqrt(max(var, 0.0)) * z[t]
    return x


@njit(cache=True)
def glasso_cd(S, Lam, Theta0, n_outer, n_inner, tol):
    """Block coordinate descent for the graphical lasso with a warm start.

    The working covariance starts at ``S`` (zero diagonal penalty), each
    column's regression coefficients start from ``Theta0``.  Runs ``n_outer``
    cycles over the columns (or until the working covariance moves less than
    ``tol`` when ``tol > 0``) with ``n_inner`` coordinate sweeps per column.
    Returns the precision estimate (not yet symmetrized).
    """
    M = S.shape[0]
    W = S.copy()
    B = np.zeros((M, M))  # column j holds beta for node j (entry j unused)
    for j in range(M):
        for k in range(M):
            if k != j:
                B[k, j] = -Theta0[k, j] / Theta0[j, j]
    for it in range(n_outer):
        delta = 0.0
        for j in range(M):
            for sweep in range(n_inner):
                for k in range(M):
                    if k == j:
                        continue
                    r = S[k, j]
                    for l in range(M):
                        if l != j and l != k:
                            r -= W[k, l] * B[l, j]
                    lam = Lam[k, j]
                    a = abs(r) - lam
                    if a > 0.0:
                        B[k, j] = np.sign(r) * a / W[k, k]
                    else:
                        B[k, j] = 0.0
            for k in range(M):
                if k == j:
                    continue
                acc = 0.0
                for l in range(M):
                    if l != j:
                        acc += W[k, l] * B[l, j]
                delta = max(delta, abs(acc - W[k, j]))
                W[k, j] = acc
                W[j, k] = acc
        if tol > 0.0 and delta < tol:
            break
    Theta = np.zeros((M, M))
    for j in range(M):
        q = W[j, j]
        for k in range(M):
            if k != j:
                q -= W[k, j] * B[k, j]
        Theta[j, j] = 1.0 / q
        for k in range(M):
            if k != j:
                Theta[k, j] = -B[k, j] * Theta[j, j]
    return Theta


@njit(cache=True)
def glasso_cd_batch(S, Lam, Theta0, n_outer, n_inner, tol):
    """:func:`glasso_cd` applied to each matrix of a T x M x M stack."""
    out = np.empty_like(S)
    for t in range(S.shape[0]):
        out[t] = glasso_cd(S[t], Lam[t], Theta0[t], n_outer, n_inner, tol)
    return out
