"""Numba kernels for the spike-and-slab Gibbs sweeps.

One call performs a full pass over the coefficient blocks of one iteration,
updating ``beta``, the residual buffer ``r`` (and, for the probit variant,
the latent outcome ``y``) in place. The RNG is a numpy Generator shared with
the Python-level driver, so a chain consumes one deterministic stream.

Per block J the active set is drawn over all 2^|J| subsets with
 log-weight(S) = (|J|-|S|) log p0 + |S| log(1-p0)
                 - 0.5 logdet(Q_S) + tau2/(2 sigma2^2) * v_S' Q_S^{-1} v_S,
where Q_S = I + (tau2/sigma2) X_S'X_S and v = X_J' r_without_block; the
active coefficients are then drawn from N((tau2/sigma2) Q_S^{-1} v_S,
tau2 Q_S^{-1}). Both expressions are the Woodbury-reduced forms of the
Gaussian marginal likelihood and conditional.
"""

import math

import numpy as np
from numba import njit

NEG_INF = -1.0e300


@njit(cache=True)
def _tn_lower(rng, a):
    """Standard normal conditioned on being >= a; stable for large a."""
    if a <= 0.0:
        while True:
            z = rng.standard_normal()
            if z >= a:
                return z
    lam = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        z = a + rng.exponential(1.0) / lam
        if rng.random() <= math.exp(-0.5 * (z - lam) * (z - lam)):
            return z


@njit(cache=True)
def _chol_in_place(L, size):
    """Cholesky of the leading size x size block of L, overwriting it."""
    for c in range(size):
        s = L[c, c]
        for t in range(c):
            s -= L[c, t] * L[c, t]
        L[c, c] = math.sqrt(s)
        for rr in range(c + 1, size):
            s = L[rr, c]
            for t in range(c):
                s -= L[rr, t] * L[c, t]
            L[rr, c] = s / L[c, c]


@njit(cache=True)
def gibbs_sweep(X, XtX, y, r, beta, offset, block_size, sigma2, tau2, p0, probit, z, rng):
    """One full block sweep. X must be Fortran-ordered; r == y - X @ beta."""
    n, p = X.shape
    a_ratio = tau2 / sigma2
    quad_coef = tau2 / (2.0 * sigma2 * sigma2)
    sd = math.sqrt(sigma2)
    log_p0 = math.log(p0) if p0 > 0.0 else NEG_INF
    log_1mp0 = math.log(1.0 - p0) if p0 < 1.0 else NEG_INF

    kmax = block_size
    Q = np.empty((kmax, kmax))
    v = np.empty(kmax)
    vsub = np.empty(kmax)
    u = np.empty(kmax)
    w = np.empty(kmax)
    idx = np.empty(kmax, dtype=np.int64)
    logw = np.empty(1 << kmax)

    start = 0
    end = min(offset, p) if offset > 0 else min(block_size, p)
    while start < p:
        kb = end - start

        if probit:
            # Refresh the latent outcome given z before every block update.
            for i in range(n):
                mu_i = y[i] - r[i]
                if z[i] == 1:
                    t = _tn_lower(rng, -mu_i / sd)
                    y_new = mu_i + sd * t
                else:
                    t = _tn_lower(rng, mu_i / sd)
                    y_new = mu_i - sd * t
                r[i] += y_new - y[i]
                y[i] = y_new

        # Strip the block's own contribution out of the residual.
        for jj in range(start, end):
            bj = beta[jj]
            if bj != 0.0:
                for i in range(n):
                    r[i] += X[i, jj] * bj

        for t in range(kb):
            jj = start + t
            acc = 0.0
            for i in range(n):
                acc += X[i, jj] * r[i]
            v[t] = acc

        nsub = 1 << kb
        for mask in range(nsub):
            csize = 0
            for t in range(kb):
                if mask & (1 << t):
                    idx[csize] = t
                    csize += 1
            lw = (kb - csize) * log_p0 + csize * log_1mp0
            if csize > 0 and lw > NEG_INF:
                for a in range(csize):
                    ia = idx[a]
                    for b in range(csize):
                        Q[a, b] = a_ratio * XtX[start + ia, start + idx[b]]
                    Q[a, a] += 1.0
                    vsub[a] = v[ia]
                _chol_in_place(Q, csize)
                logdet = 0.0
                for a in range(csize):
                    logdet += 2.0 * math.log(Q[a, a])
                # forward solve L u = v_sub
                quad = 0.0
                for a in range(csize):
                    s = vsub[a]
                    for t in range(a):
                        s -= Q[a, t] * u[t]
                    u[a] = s / Q[a, a]
                    quad += u[a] * u[a]
                lw += -0.5 * logdet + quad_coef * quad
            logw[mask] = lw

        # Normalized inverse-CDF draw over subsets, in enumeration order.
        mbest = logw[0]
        for mask in range(1, nsub):
            if logw[mask] > mbest:
                mbest = logw[mask]
        total = 0.0
        for mask in range(nsub):
            total += math.exp(logw[mask] - mbest)
        target = rng.random() * total
        chosen = nsub - 1
        acc = 0.0
        for mask in range(nsub):
            acc += math.exp(logw[mask] - mbest)
            if acc >= target:
                chosen = mask
                break

        for t in range(kb):
            beta[start + t] = 0.0
        csize = 0
        for t in range(kb):
            if chosen & (1 << t):
                idx[csize] = t
                csize += 1
        if csize > 0:
            for a in range(csize):
                ia = idx[a]
                for b in range(csize):
                    Q[a, b] = a_ratio * XtX[start + ia, start + idx[b]]
                Q[a, a] += 1.0
                vsub[a] = v[ia]
            _chol_in_place(Q, csize)
            for a in range(csize):
                s = vsub[a]
                for t in range(a):
                    s -= Q[a, t] * u[t]
                u[a] = s / Q[a, a]
            # back solve L^T m = u -> mean/a_ratio, reuse w for the mean
            for a in range(csize - 1, -1, -1):
                s = u[a]
                for t in range(a + 1, csize):
                    s -= Q[t, a] * w[t]
                w[a] = s / Q[a, a]
            for a in range(csize):
                w[a] *= a_ratio
            # noise: beta_A = mean + sqrt(tau2) L^{-T} xi
            for a in range(csize):
                u[a] = rng.standard_normal()
            sd_tau = math.sqrt(tau2)
            for a in range(csize - 1, -1, -1):
                s = u[a]
                for t in range(a + 1, csize):
                    s -= Q[t, a] * vsub[t]
                vsub[a] = s / Q[a, a]
            for a in range(csize):
                bnew = w[a] + sd_tau * vsub[a]
                jj = start + idx[a]
                beta[jj] = bnew
                for i in range(n):
                    r[i] -= X[i, jj] * bnew

        start = end
        end = min(end + block_size, p)
