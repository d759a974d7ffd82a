"""Random variates and densities used by the sampler.

Everything here takes an explicit ``numpy.random.Generator``; nothing touches
global random state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .exceptions import InputError, NumericalError

__all__ = [
    "MvnParams",
    "TruncMvnParams",
    "SunParams",
    "norm_cdf",
    "norm_logpdf",
    "rtruncnorm",
    "sample_trunc_mvn",
    "sample_sun",
    "bvn_cdf",
    "rinvgamma",
    "invgamma_mean",
    "invgamma_var",
    "rcategorical",
    "spd_factor",
]

SYM_TOL = 1e-10
TAIL_SWITCH = 5.0  # standardized bound above which exponential rejection is used


def _as_finite(name, value, ndim):
    arr = np.asarray(value, dtype=float)
    if arr.ndim != ndim:
        raise InputError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class MvnParams:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = _as_finite("mean", self.mean, 1)
        cov = _as_finite("covariance", self.covariance, 2)
        if cov.shape != (mean.size, mean.size):
            raise InputError(f"covariance shape {cov.shape} does not match mean length {mean.size}")
        if np.max(np.abs(cov - cov.T), initial=0.0) > SYM_TOL:
            raise InputError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", 0.5 * (cov + cov.T))


@dataclass(frozen=True)
class TruncMvnParams:
    """Gaussian N(mean, covariance) restricted to ``x >= lower_bounds``.

    Lower bounds may be ``-inf``; means and covariance must be finite.
    """

    lower_bounds: np.ndarray
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower_bounds, dtype=float)
        if lower.ndim != 1 or np.any(np.isnan(lower)) or np.any(lower == np.inf):
            raise InputError("lower_bounds must be a 1-d vector of finite values or -inf")
        mean = _as_finite("mean", self.mean, 1)
        cov = _as_finite("covariance", self.covariance, 2)
        h = lower.size
        if mean.size != h or cov.shape != (h, h):
            raise InputError(
                f"dimension mismatch: bounds {h}, mean {mean.size}, covariance {cov.shape}"
            )
        if np.max(np.abs(cov - cov.T), initial=0.0) > SYM_TOL:
            raise InputError("covariance is not symmetric")
        object.__setattr__(self, "lower_bounds", lower)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", 0.5 * (cov + cov.T))

    @property
    def dim(self):
        return self.lower_bounds.size


@dataclass(frozen=True)
class SunParams:
    """Unified skew-normal SUN_{q,h}(xi, Omega, delta, gamma, gamma_cov).

    ``Omega = diag(omega_scale) @ I @ diag(omega_scale)``: the correlation
    matrix of the Gaussian part is taken to be the identity.
    """

    xi: np.ndarray
    omega_scale: np.ndarray
    delta: np.ndarray
    gamma: np.ndarray
    gamma_cov: np.ndarray

    def __post_init__(self):
        xi = _as_finite("xi", self.xi, 1)
        omega = _as_finite("omega_scale", np.broadcast_to(self.omega_scale, xi.shape), 1)
        if np.any(omega <= 0):
            raise InputError("omega_scale must be strictly positive")
        gamma = _as_finite("gamma", self.gamma, 1)
        delta = _as_finite("delta", np.reshape(self.delta, (xi.size, gamma.size)), 2)
        gamma_cov = _as_finite("gamma_cov", self.gamma_cov, 2)
        if gamma_cov.shape != (gamma.size, gamma.size):
            raise InputError(f"gamma_cov shape {gamma_cov.shape} does not match h={gamma.size}")
        if np.max(np.abs(gamma_cov - gamma_cov.T), initial=0.0) > SYM_TOL:
            raise InputError("gamma_cov is not symmetric")
        for name, val in (("xi", xi), ("omega_scale", omega), ("delta", delta),
                          ("gamma", gamma), ("gamma_cov", 0.5 * (gamma_cov + gamma_cov.T))):
            object.__setattr__(self, name, val)

    @property
    def q(self):
        return self.xi.size

    @property
    def h(self):
        return self.gamma.size


# -- univariate ---------------------------------------------------------------

def norm_cdf(x):
    return special.ndtr(x)


def norm_logpdf(x, mean=0.0, var=1.0):
    x = np.asarray(x, dtype=float)
    return -0.5 * (np.log(2 * np.pi * var) + (x - mean) ** 2 / var)


def rtruncnorm(mean, sd, lower, rng):
    """Draw from N(mean, sd^2) truncated to ``[lower, inf)``, elementwise.

    Inverse-CDF on the upper tail while the standardized bound is below 5;
    beyond that, Robert's translated-exponential rejection sampler.
    """
    mean, sd, lower = np.broadcast_arrays(
        np.asarray(mean, float), np.asarray(sd, float), np.asarray(lower, float)
    )
    a = (lower - mean) / sd
    out = np.empty(a.shape)
    body = a <= TAIL_SWITCH
    if np.any(body):
        # 1 - U lies in (0, 1], so the argument of ndtri is never 0
        u = 1.0 - rng.random(np.count_nonzero(body))
        out[body] = -special.ndtri(u * special.ndtr(-a[body]))
    tail = np.flatnonzero(~body)
    if tail.size:
        out.flat[tail] = _tail_rejection(a.flat[tail], rng)
    return mean + sd * out


def _tail_rejection(a, rng):
    a = np.asarray(a, float)
    rate = 0.5 * (a + np.sqrt(a * a + 4.0))
    out = np.empty(a.shape)
    todo = np.arange(a.size)
    while todo.size:
        z = a[todo] + rng.exponential(size=todo.size) / rate[todo]
        accept = np.log(rng.random(todo.size)) <= -0.5 * (z - rate[todo]) ** 2
        out[todo[accept]] = z[accept]
        todo = todo[~accept]
    return out


def rinvgamma(shape, scale, rng, size=None):
    """Inverse-gamma variates with density proportional to x^(-shape-1) exp(-scale/x)."""
    shape = np.asarray(shape, float)
    scale = np.asarray(scale, float)
    if np.any(shape <= 0) or np.any(scale <= 0):
        raise InputError("inverse-gamma shape and scale must be positive")
    return scale / rng.gamma(shape, 1.0, size=size)


def invgamma_mean(shape, scale):
    if shape <= 1:
        return math.inf
    return scale / (shape - 1)


def invgamma_var(shape, scale):
    if shape <= 2:
        return math.inf
    return scale**2 / ((shape - 1) ** 2 * (shape - 2))


def invgamma_logpdf(x, shape, scale):
    x = np.asarray(x, float)
    return shape * np.log(scale) - special.gammaln(shape) - (shape + 1) * np.log(x) - scale / x


def rcategorical(weights, rng, log=False):
    """One categorical draw per row of ``weights`` (0-based indices).

    With ``log=True`` the rows are unnormalized log-weights; they are shifted
    by their maximum before exponentiation, so rows whose masses all underflow
    are still well defined.
    """
    w = np.atleast_2d(np.asarray(weights, float))
    if log:
        w = np.exp(w - np.max(w, axis=1, keepdims=True))
    elif np.any(w < 0):
        raise InputError("categorical weights must be nonnegative")
    cum = np.cumsum(w, axis=1)
    total = cum[:, -1]
    if np.any(~(total > 0)):
        raise InputError("categorical weights sum to zero")
    u = rng.random(w.shape[0]) * total
    idx = (cum <= u[:, None]).sum(axis=1)
    return np.minimum(idx, w.shape[1] - 1)


# -- multivariate ---------------------------------------------------------------

def spd_factor(cov, jitter=1e-8, tol=-1e-10, what="covariance"):
    """Return ``F`` with ``F @ F.T == cov`` after clamping small negative eigenvalues.

    Tries Cholesky first; falls back to an eigen-decomposition with eigenvalues
    clamped at zero. Eigenvalues below ``tol`` are a NumericalError.
    """
    cov = 0.5 * (cov + cov.T)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() < tol:
        raise NumericalError(
            f"{what} is indefinite: smallest eigenvalue {vals.min():.3e} (tolerance {tol:.1e})"
        )
    vals = np.clip(vals, 0.0, None) + jitter
    return vecs * np.sqrt(vals)


def _precision(cov):
    h = cov.shape[0]
    for jitter in (0.0, 1e-8, 1e-6):
        try:
            c = np.linalg.cholesky(cov + jitter * np.eye(h))
            break
        except np.linalg.LinAlgError:
            continue
    else:
        raise NumericalError("truncated-normal covariance is not positive definite")
    ci = np.linalg.inv(c)
    return ci.T @ ci


def sample_trunc_mvn(params: TruncMvnParams, rng, sweeps=10, size=None, start=None):
    """Approximate draw(s) from a lower-truncated multivariate normal.

    Runs ``sweeps`` systematic-scan Gibbs sweeps of the univariate full
    conditionals. Unless ``start`` is given, each chain starts at
    ``max(mean, lower + 1e-6)`` componentwise. With ``size`` the sweeps are
    vectorized over that many independent chains and an array of shape
    ``(size, h)`` is returned.
    """
    if sweeps < 1:
        raise InputError("sweeps must be >= 1")
    h = params.dim
    prec = _precision(params.covariance)
    cond_sd = 1.0 / np.sqrt(np.diag(prec))
    m = 1 if size is None else int(size)
    mu, lower = params.mean, params.lower_bounds
    if start is None:
        z = np.broadcast_to(np.maximum(mu, lower + 1e-6), (m, h)).copy()
    else:
        z = np.broadcast_to(np.asarray(start, float), (m, h)).copy()
        if np.any(z < lower):
            raise InputError("start violates the lower bounds")
    dev = z - mu
    for _ in range(sweeps):
        for j in range(h):
            # E[x_j | x_-j] = mu_j - (1/Q_jj) sum_{k != j} Q_jk (x_k - mu_k)
            shift = (dev @ prec[:, j] - prec[j, j] * dev[:, j]) / prec[j, j]
            z[:, j] = rtruncnorm(mu[j] - shift, cond_sd[j], lower[j], rng)
            dev[:, j] = z[:, j] - mu[j]
    return z[0] if size is None else z


def sample_sun(params: SunParams, rng, sweeps=10, size=None):
    """Draw(s) from SUN via its additive Gaussian + truncated-Gaussian representation.

    ``beta = xi + omega * (B0 + delta @ inv(gamma_cov) @ B1)`` with
    ``B0 ~ N(0, I - delta inv(gamma_cov) delta^T)`` and
    ``B1 ~ N(0, gamma_cov)`` truncated below ``-gamma``.
    """
    q, h = params.q, params.h
    m = 1 if size is None else int(size)
    if h == 0:
        b = rng.standard_normal((m, q))
    else:
        gi_delta_t = np.linalg.solve(params.gamma_cov, params.delta.T)  # h x q
        cov0 = np.eye(q) - params.delta @ gi_delta_t
        factor = spd_factor(cov0, tol=-1e-6, what="I - delta inv(Gamma) delta^T")
        b0 = rng.standard_normal((m, q)) @ factor.T
        b1 = sample_trunc_mvn(
            TruncMvnParams(-params.gamma, np.zeros(h), params.gamma_cov),
            rng, sweeps=sweeps, size=m,
        )
        b = b0 + b1 @ gi_delta_t
    out = params.xi + params.omega_scale * b
    return out[0] if size is None else out


def bvn_cdf(a, b, rho):
    """P(Z1 <= a, Z2 <= b) for a standard bivariate normal with correlation rho.

    Uses Phi(a)Phi(b) + (1/2pi) * int_0^{asin rho} exp(-(a^2 - 2ab sin t + b^2) / (2 cos^2 t)) dt,
    integrated adaptively.
    """
    a, b, rho = float(a), float(b), float(rho)
    if math.isnan(a) or math.isnan(b) or not -1.0 <= rho <= 1.0:
        raise InputError("bvn_cdf requires non-NaN limits and rho in [-1, 1]")
    if a == -math.inf or b == -math.inf:
        return 0.0
    if a == math.inf:
        return float(special.ndtr(b))
    if b == math.inf:
        return float(special.ndtr(a))
    if rho == 1.0:
        return float(special.ndtr(min(a, b)))
    if rho == -1.0:
        return max(0.0, float(special.ndtr(a) + special.ndtr(b) - 1.0))

    def integrand(t):
        c = math.cos(t)
        return math.exp(-(a * a - 2.0 * a * b * math.sin(t) + b * b) / (2.0 * c * c))

    val, _ = integrate.quad(integrand, 0.0, math.asin(rho), epsabs=1e-12, epsrel=1e-12, limit=200)
    p = float(special.ndtr(a) * special.ndtr(b)) + val / (2.0 * math.pi)
    return min(1.0, max(0.0, p))
