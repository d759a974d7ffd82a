"""Model containers, probit stick-breaking weights and the prior dissociative probability."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy import special

from .dist import bvn_cdf, rinvgamma
from .exceptions import InputError

__all__ = [
    "Hyperparams",
    "ObservedDataset",
    "MixtureState",
    "OutcomeState",
    "compute_weights",
    "stick_weights",
    "log_stick_weights",
    "prior_dissociative_probability",
    "rho_moments",
    "init_state",
]


@dataclass(frozen=True)
class Hyperparams:
    """Prior settings. Defaults are the noninformative simulation-study choices."""

    L: int = 20
    mu_eta: float = 0.0
    sigma2_eta: float = 20.0
    gamma1: float = 2.0
    gamma2: float = 0.5
    xi: float = 0.0
    omega2: float = 20.0
    mu_theta: float = 0.0
    sigma2_theta: float = 100.0
    mu_lambda: float = 0.0
    sigma2_lambda: float = 4.0

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 2:
            raise InputError(f"L must be an integer >= 2, got {self.L}")
        object.__setattr__(self, "L", int(self.L))
        for name in ("sigma2_eta", "gamma1", "gamma2", "omega2", "sigma2_theta", "sigma2_lambda"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InputError(f"{name} must be a positive finite number, got {value}")
        for name in ("mu_eta", "xi", "mu_theta", "mu_lambda"):
            if not math.isfinite(getattr(self, name)):
                raise InputError(f"{name} must be finite")

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    def xi_matrix(self, p):
        """Prior mean of the probit coefficients laid out as (L-1) x (p+1)."""
        return np.full((self.L - 1, p + 1), float(self.xi))


@dataclass
class ObservedDataset:
    x: np.ndarray
    t: np.ndarray
    p_obs: np.ndarray
    y_obs: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if x.size else x.reshape(0, 0)
        t = np.asarray(self.t)
        p_obs = np.asarray(self.p_obs, dtype=float)
        y_obs = np.asarray(self.y_obs, dtype=float)
        n = t.shape[0]
        if x.shape[0] != n or p_obs.shape != (n,) or y_obs.shape != (n,):
            raise InputError(
                f"inconsistent lengths: x {x.shape}, t {t.shape}, p {p_obs.shape}, y {y_obs.shape}"
            )
        if n and not np.all(np.isin(t, (0, 1))):
            bad = int(np.flatnonzero(~np.isin(t, (0, 1)))[0])
            raise InputError(f"treatment must be 0/1; row {bad} has {t[bad]!r}")
        for name, arr in (("x", x), ("p", p_obs), ("y", y_obs)):
            if not np.all(np.isfinite(arr)):
                raise InputError(f"non-finite values in {name}")
        self.x = x
        self.t = t.astype(np.int64)
        self.p_obs = p_obs
        self.y_obs = y_obs

    @property
    def n(self):
        return self.t.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    @property
    def design(self):
        """Covariates with a leading intercept column."""
        return np.column_stack([np.ones(self.n), self.x])

    def check_fittable(self):
        if self.n < 1:
            raise InputError("dataset is empty")
        if not (np.any(self.t == 0) and np.any(self.t == 1)):
            raise InputError("both treatment arms must contain at least one unit")


@dataclass
class MixtureState:
    """Shared atoms, per-arm probit coefficients, labels and imputed post-treatment values.

    ``beta0``/``beta1`` are (p+1) x (L-1): column l holds the intercept and
    slopes of stick l. Labels ``s0``/``s1`` are 1-based.
    """

    eta: np.ndarray
    sigma2: np.ndarray
    beta0: np.ndarray
    beta1: np.ndarray
    s0: np.ndarray
    s1: np.ndarray
    p_missing: np.ndarray

    @property
    def L(self):
        return self.eta.size

    def beta(self, arm):
        return self.beta1 if arm else self.beta0

    def labels(self, arm):
        return self.s1 if arm else self.s0

    def potential_post(self, data: ObservedDataset):
        """Return (P(0), P(1)) combining observed and imputed values."""
        treated = data.t == 1
        p0 = np.where(treated, self.p_missing, data.p_obs)
        p1 = np.where(treated, data.p_obs, self.p_missing)
        return p0, p1

    def copy(self):
        return replace(self, **{f.name: getattr(self, f.name).copy() for f in fields(self)})


@dataclass
class OutcomeState:
    theta0: np.ndarray = field(default_factory=lambda: np.zeros(2))
    theta1: np.ndarray = field(default_factory=lambda: np.zeros(4))
    lambda0: float = 0.0
    lambda1: float = 0.0

    def copy(self):
        return OutcomeState(self.theta0.copy(), self.theta1.copy(), self.lambda0, self.lambda1)

    def mean0(self, p0):
        return self.theta0[0] + self.theta0[1] * p0

    def mean1(self, p0, p1):
        th = self.theta1
        return th[0] + th[1] * p1 + th[2] * p0 + th[3] * p0 * p1

    def log_var0(self):
        return self.lambda0

    def log_var1(self, p1):
        return self.lambda0 + self.lambda1 * p1


def _linear_predictors(beta_arm, x):
    beta_arm = np.asarray(beta_arm, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if beta_arm.ndim != 2 or x.shape[1] + 1 != beta_arm.shape[0]:
        raise InputError(
            f"coefficients {beta_arm.shape} incompatible with {x.shape[1]} covariates"
        )
    return beta_arm[0] + x @ beta_arm[1:]  # n x (L-1)


def stick_weights(beta_arm, x):
    """Probit stick-breaking weights for every row of ``x``; shape (n, L).

    The last stick is closed, so the L-th weight is the leftover mass.
    """
    alpha = _linear_predictors(beta_arm, x)
    if not np.all(np.isfinite(alpha)):
        raise InputError("non-finite linear predictor in stick-breaking weights")
    take = special.ndtr(alpha)
    leave = special.ndtr(-alpha)
    n, k = alpha.shape
    remaining = np.ones((n, k + 1))
    remaining[:, 1:] = np.cumprod(leave, axis=1)
    weights = remaining.copy()
    weights[:, :k] *= take
    return weights


def log_stick_weights(beta_arm, x):
    alpha = _linear_predictors(beta_arm, x)
    n, k = alpha.shape
    out = np.zeros((n, k + 1))
    out[:, 1:] = np.cumsum(special.log_ndtr(-alpha), axis=1)
    out[:, :k] += special.log_ndtr(alpha)
    return out


def compute_weights(beta_arm, x_row):
    """Stick-breaking weights (length L) for a single covariate vector."""
    x_row = np.asarray(x_row, dtype=float).reshape(1, -1)
    return stick_weights(beta_arm, x_row)[0]


def prior_dissociative_probability(rho1, rho2, L):
    """Prior probability that both arms pick the same atom.

    Sum over l <= L of rho2 * (1 + rho2 - 2 rho1)^(l-1), where rho1 and rho2
    are the first two moments of one stick fraction.
    """
    rho1, rho2 = float(rho1), float(rho2)
    if int(L) != L or L < 1:
        raise InputError(f"L must be a positive integer, got {L}")
    if not 0.0 < rho1 <= 1.0:
        raise InputError(f"rho1 must lie in (0, 1], got {rho1}")
    tol = 1e-12
    if not (rho1 * rho1 - tol <= rho2 <= rho1 + tol):
        raise InputError(f"rho2 must satisfy rho1^2 <= rho2 <= rho1, got rho1={rho1}, rho2={rho2}")
    d = rho2 - 2.0 * rho1
    if abs(d) < tol:
        return min(1.0, L * rho2)
    # (1 + d)^L - 1 computed as expm1(L log1p(d)) to stay accurate when d is small
    with np.errstate(divide="ignore"):
        growth = np.expm1(L * np.log1p(d))
    return float(min(1.0, max(0.0, rho2 * growth / d)))


def rho_moments(alpha_mean):
    """First two moments of Phi(alpha) for alpha ~ N(alpha_mean, 1)."""
    mu = float(alpha_mean)
    if math.isnan(mu):
        raise InputError("alpha_mean is NaN")
    if math.isinf(mu):
        return (1.0, 1.0) if mu > 0 else (0.0, 0.0)
    a = mu / math.sqrt(2.0)
    return float(special.ndtr(a)), bvn_cdf(a, a, 0.5)


def init_state(data: ObservedDataset, hp: Hyperparams, rng):
    """Draw a starting point from the priors; counterfactual post-treatment values copy the observed one."""
    L, p, n = hp.L, data.p, data.n
    eta = rng.normal(hp.mu_eta, math.sqrt(hp.sigma2_eta), size=L)
    sigma2 = rinvgamma(hp.gamma1, hp.gamma2, rng, size=L)
    sd = math.sqrt(hp.omega2)
    beta0 = hp.xi + sd * rng.standard_normal((p + 1, L - 1))
    beta1 = hp.xi + sd * rng.standard_normal((p + 1, L - 1))
    s0 = rng.integers(1, L + 1, size=n)
    s1 = rng.integers(1, L + 1, size=n)
    mixture = MixtureState(eta, sigma2, beta0, beta1, s0, s1, data.p_obs.copy())
    sd_theta = math.sqrt(hp.sigma2_theta)
    sd_lambda = math.sqrt(hp.sigma2_lambda)
    outcome = OutcomeState(
        theta0=rng.normal(hp.mu_theta, sd_theta, size=2),
        theta1=rng.normal(hp.mu_theta, sd_theta, size=4),
        lambda0=float(rng.normal(hp.mu_lambda, sd_lambda)),
        lambda1=float(rng.normal(hp.mu_lambda, sd_lambda)),
    )
    return mixture, outcome
