"""Independent reference computations used only by the tests."""

import itertools
import math

import numpy as np
from scipy import special
from scipy.integrate import trapezoid


def grid_moments(log_density, grid):
    """Mean and variance of a 1-D density known up to a constant, by trapezoid quadrature."""
    lw = log_density(grid)
    w = np.exp(lw - lw.max())
    z = trapezoid(w, grid)
    mean = trapezoid(w * grid, grid) / z
    var = trapezoid(w * (grid - mean) ** 2, grid) / z
    return mean, var


def grid_moments_2d(log_density, g1, g2):
    """Mean vector and covariance of a 2-D density on a tensor grid."""
    a, b = np.meshgrid(g1, g2, indexing="ij")
    lw = log_density(a, b)
    w = np.exp(lw - lw.max())
    z = trapezoid(trapezoid(w, g2, axis=1), g1)

    def integ(f):
        return trapezoid(trapezoid(w * f, g2, axis=1), g1) / z

    m = np.array([integ(a), integ(b)])
    da, db = a - m[0], b - m[1]
    cov = np.array([[integ(da * da), integ(da * db)], [integ(da * db), integ(db * db)]])
    return m, cov


def grid_cdf(log_density, lo, hi, points=20001):
    """Callable CDF of a 1-D density by cumulative trapezoid on a fine grid."""
    x = np.linspace(lo, hi, points)
    lw = log_density(x)
    w = np.exp(lw - lw.max())
    c = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(x))])
    c /= c[-1]
    return lambda v: np.interp(v, x, c)


def probit_da_chains(xbar, omega2, rng, chains=100_000, steps=300):
    """Albert-Chib latent-utility Gibbs for a probit likelihood prod Phi(xbar beta).

    Runs ``chains`` independent chains in parallel from the prior and returns
    their final states, shape (chains, q).
    """
    xbar = np.asarray(xbar, float)
    m, q = xbar.shape
    V = np.linalg.inv(xbar.T @ xbar + np.eye(q) / omega2)
    cv = np.linalg.cholesky(V)
    beta = math.sqrt(omega2) * rng.standard_normal((chains, q))
    for _ in range(steps):
        mu = beta @ xbar.T  # chains x m
        # u ~ N(mu, 1) truncated to u > 0, by inverse CDF
        u = rng.random((chains, m))
        lo = special.ndtr(-mu)
        lat = mu + special.ndtri(lo + u * (1.0 - lo))
        lat = np.where(np.isfinite(lat), lat, np.maximum(mu, 0.0))
        beta = (lat @ xbar) @ V.T + rng.standard_normal((chains, q)) @ cv.T
    return beta


def mc_equal_labels(rho1, L, draws, rng, chunk=250_000):
    """P(S0 = S1 <= L) for two independent label sequences from fixed sticks of size rho1."""
    hits = 0
    done = 0
    while done < draws:
        m = min(chunk, draws - done)
        s0 = rng.geometric(rho1, size=m)
        s1 = rng.geometric(rho1, size=m)
        hits += int(np.count_nonzero((s0 == s1) & (s0 <= L)))
        done += m
    p = hits / draws
    return p, math.sqrt(p * (1 - p) / draws)


def ari_pair_counting(a, b):
    """Adjusted Rand index from explicit pair enumeration."""
    n11 = n10 = n01 = n00 = 0
    for i, j in itertools.combinations(range(len(a)), 2):
        same_a = a[i] == a[j]
        same_b = b[i] == b[j]
        if same_a and same_b:
            n11 += 1
        elif same_a:
            n10 += 1
        elif same_b:
            n01 += 1
        else:
            n00 += 1
    num = 2.0 * (n00 * n11 - n01 * n10)
    den = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11)
    return 1.0 if den == 0 else num / den


def set_partitions(n, max_blocks):
    """All partitions of n elements into at most ``max_blocks`` blocks, as restricted growth strings."""
    out = []

    def grow(prefix, top):
        if len(prefix) == n:
            out.append(tuple(prefix))
            return
        for v in range(min(top + 2, max_blocks)):
            grow(prefix + [v], max(top, v))

    grow([0], 0)
    return out
