"""Compiled inner loop of the probit stick-breaking coefficient update.

The truncated latent vector attached to one stick has as many coordinates as
units reaching that stick (up to n), so its coordinate sweeps are run here
rather than in numpy.
"""

import ctypes
import math

import numba
import numpy as np
from numba.extending import get_cython_function_address

_ndtri = ctypes.CFUNCTYPE(ctypes.c_double, ctypes.c_double)(
    get_cython_function_address("scipy.special.cython_special", "ndtri")
)

_SQRT1_2 = 1.0 / math.sqrt(2.0)


@numba.njit
def _seed(seed):
    np.random.seed(seed)


@numba.njit
def _tn_std(a):
    # standard normal truncated to [a, inf)
    if a <= 5.0:
        u = 1.0 - np.random.random()
        return -_ndtri(u * 0.5 * math.erfc(a * _SQRT1_2))
    rate = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        z = a + np.random.exponential(1.0) / rate
        if math.log(np.random.random()) <= -0.5 * (z - rate) ** 2:
            return z


@numba.njit
def latent_sweeps(xd, labels, beta, xi, gram_inv, sweeps):
    """Resample the latent utilities of every stick and return ``M_k X_k^T z_k``.

    xd:       (n, d) design with intercept column
    labels:   (n,) 1-based cluster labels for one arm
    beta:     (K, d) current coefficients, one row per stick (K = L - 1)
    xi:       (K, d) prior means
    gram_inv: (K, d, d) M_k = (X_k^T X_k + I / omega^2)^-1
    sweeps:   number of coordinate sweeps per stick

    Row j of stick k is ``sign_j * x_i`` for every unit with label >= k
    (sign +1 when label == k); its utility z_j is N(0, A) with
    A = omega^2 X X^T + I, truncated to ``z_j >= -sign_j x_i^T xi_k``.
    Each chain starts from an exact draw of z given ``beta``; the sweeps use
    the precision ``I - X M X^T`` through w = M X^T z.
    """
    n, d = xd.shape
    K = beta.shape[0]
    out = np.zeros((K, d))
    for k in range(K):
        stick = k + 1
        rows = np.empty(n, dtype=np.int64)
        signs = np.empty(n)
        m = 0
        for i in range(n):
            if labels[i] >= stick:
                rows[m] = i
                signs[m] = 1.0 if labels[i] == stick else -1.0
                m += 1
        if m == 0:
            continue
        mk = gram_inv[k]
        z = np.empty(m)
        lower = np.empty(m)
        qjj = np.empty(m)
        w = np.zeros(d)
        for j in range(m):
            i = rows[j]
            s = signs[j]
            lin_xi = 0.0
            lin_beta = 0.0
            for c in range(d):
                lin_xi += xd[i, c] * xi[k, c]
                lin_beta += xd[i, c] * beta[k, c]
            lower[j] = -s * lin_xi
            mean = s * (lin_beta - lin_xi)
            # z_j | beta ~ N(mean, 1) restricted to z_j >= lower_j
            z[j] = mean + _tn_std(lower[j] - mean)
            quad = 0.0
            for c in range(d):
                acc = 0.0
                for e in range(d):
                    acc += mk[c, e] * xd[i, e]
                quad += xd[i, c] * acc
            qjj[j] = 1.0 - quad
        # w = M_k X_k^T z
        u = np.zeros(d)
        for j in range(m):
            i = rows[j]
            for c in range(d):
                u[c] += signs[j] * xd[i, c] * z[j]
        for c in range(d):
            acc = 0.0
            for e in range(d):
                acc += mk[c, e] * u[e]
            w[c] = acc
        for _ in range(sweeps):
            for j in range(m):
                i = rows[j]
                s = signs[j]
                hw = 0.0
                for c in range(d):
                    hw += s * xd[i, c] * w[c]
                old = z[j]
                cmean = old - (old - hw) / qjj[j]
                csd = 1.0 / math.sqrt(qjj[j])
                new = cmean + csd * _tn_std((lower[j] - cmean) / csd)
                delta = (new - old) * s
                if delta != 0.0:
                    for c in range(d):
                        acc = 0.0
                        for e in range(d):
                            acc += mk[c, e] * xd[i, e]
                        w[c] += delta * acc
                z[j] = new
        for c in range(d):
            out[k, c] = w[c]
    return out
