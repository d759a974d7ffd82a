"""Blocked Gibbs sampler for the shared-atoms dependent mixture and the outcome model."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields

import numpy as np

from . import _latent
from .dist import SunParams, norm_logpdf, rcategorical, rinvgamma
from .exceptions import InputError, NumericalError
from .model import (
    Hyperparams,
    MixtureState,
    ObservedDataset,
    OutcomeState,
    init_state,
    log_stick_weights,
    stick_weights,
)
from .strata import assign_strata

__all__ = [
    "GibbsConfig",
    "PosteriorDraws",
    "OutcomeState",
    "step_cluster_allocation",
    "step_atoms",
    "atom_location_posterior",
    "atom_scale_posterior",
    "regression_posterior",
    "step_weights",
    "stacked_probit_design",
    "probit_posterior_sun",
    "step_impute_post_treatment",
    "step_outcome_params",
    "step_lambda",
    "step_impute_outcome",
    "run_chain",
]

log = logging.getLogger(__name__)

SLOPE_EPS = 1e-10


@dataclass(frozen=True)
class GibbsConfig:
    iterations: int = 3000
    burn_in: int = 1000
    thin: int = 1
    tmvn_sweeps: int = 10
    seed: int = 0

    def __post_init__(self):
        for name in ("iterations", "burn_in", "thin", "tmvn_sweeps", "seed"):
            value = getattr(self, name)
            if int(value) != value:
                raise InputError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if not self.iterations > self.burn_in >= 0:
            raise InputError("need iterations > burn_in >= 0")
        if self.thin < 1 or self.tmvn_sweeps < 1:
            raise InputError("thin and tmvn_sweeps must be >= 1")
        if self.seed < 0:
            raise InputError("seed must be nonnegative")

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    @property
    def n_kept(self):
        return (self.iterations - self.burn_in) // self.thin


@dataclass
class PosteriorDraws:
    """Kept iterations stacked along the first axis.

    Labels are 1-based; ``stratum`` holds -1/0/+1 per unit and iteration.
    """

    eta: np.ndarray         # (K, L)
    sigma2: np.ndarray      # (K, L)
    beta0: np.ndarray       # (K, p+1, L-1)
    beta1: np.ndarray       # (K, p+1, L-1)
    s0: np.ndarray          # (K, n)
    s1: np.ndarray          # (K, n)
    p_missing: np.ndarray   # (K, n)
    y_missing: np.ndarray   # (K, n)
    theta0: np.ndarray      # (K, 2)
    theta1: np.ndarray      # (K, 4)
    lambda0: np.ndarray     # (K,)
    lambda1: np.ndarray     # (K,)
    stratum: np.ndarray     # (K, n)
    iteration: np.ndarray   # (K,) 1-based sweep index of each kept draw

    def __len__(self):
        return self.eta.shape[0]

    def mixture_state(self, k):
        return MixtureState(
            self.eta[k].copy(), self.sigma2[k].copy(), self.beta0[k].copy(),
            self.beta1[k].copy(), self.s0[k].copy(), self.s1[k].copy(), self.p_missing[k].copy(),
        )

    def outcome_state(self, k):
        return OutcomeState(
            self.theta0[k].copy(), self.theta1[k].copy(),
            float(self.lambda0[k]), float(self.lambda1[k]),
        )

    def potential_outcomes(self, data: ObservedDataset):
        """(P0, P1, Y0, Y1) arrays of shape (K, n) mixing observed and imputed values."""
        treated = data.t == 1
        p0 = np.where(treated, self.p_missing, data.p_obs)
        p1 = np.where(treated, data.p_obs, self.p_missing)
        y0 = np.where(treated, self.y_missing, data.y_obs)
        y1 = np.where(treated, data.y_obs, self.y_missing)
        return p0, p1, y0, y1


# -- mixture steps -----------------------------------------------------------------

def step_cluster_allocation(state: MixtureState, data: ObservedDataset, hp: Hyperparams, rng):
    """Redraw both arms' labels from weight x kernel, normalized in log space."""
    p0, p1 = state.potential_post(data)
    for arm, values in ((0, p0), (1, p1)):
        logw = log_stick_weights(state.beta(arm), data.x)
        logw = logw + norm_logpdf(values[:, None], state.eta[None, :], state.sigma2[None, :])
        labels = rcategorical(logw, rng, log=True) + 1
        if arm:
            state.s1 = labels
        else:
            state.s0 = labels
    return state


def atom_location_posterior(values, idx, sigma2, hp: Hyperparams):
    """Normal full conditional (mean, variance) of each eta_l; ``idx`` holds 0-based labels."""
    L = sigma2.size
    counts = np.bincount(idx, minlength=L)
    sums = np.bincount(idx, weights=values, minlength=L)
    precision = counts / sigma2 + 1.0 / hp.sigma2_eta
    mean = (sums / sigma2 + hp.mu_eta / hp.sigma2_eta) / precision
    return mean, 1.0 / precision


def atom_scale_posterior(values, idx, eta, hp: Hyperparams):
    """Inverse-gamma full conditional (shape, scale) of each sigma2_l given eta."""
    L = eta.size
    counts = np.bincount(idx, minlength=L)
    sse = np.bincount(idx, weights=(values - eta[idx]) ** 2, minlength=L)
    return hp.gamma1 + counts / 2.0, hp.gamma2 + sse / 2.0


def step_atoms(state: MixtureState, data: ObservedDataset, hp: Hyperparams, rng):
    """Conjugate update of the shared atoms, pooling both arms' values."""
    p0, p1 = state.potential_post(data)
    values = np.concatenate([p0, p1])
    idx = np.concatenate([state.s0, state.s1]) - 1
    mean, var = atom_location_posterior(values, idx, state.sigma2, hp)
    state.eta = mean + rng.standard_normal(state.L) * np.sqrt(var)
    shape, scale = atom_scale_posterior(values, idx, state.eta, hp)
    state.sigma2 = rinvgamma(shape, scale, rng)
    return state


def _gram_inverses(xd, labels, K, omega2):
    """M_k = (sum over units reaching stick k of x x^T + I/omega2)^-1 for k = 1..K."""
    n, d = xd.shape
    outer = (xd[:, :, None] * xd[:, None, :]).reshape(n, d * d)
    by_label = np.zeros((K + 2, d * d))
    np.add.at(by_label, np.minimum(labels, K + 1), outer)
    # units reaching stick k are those with label >= k
    gram = np.cumsum(by_label[::-1], axis=0)[::-1][1:K + 1].reshape(K, d, d)
    gram = gram + np.eye(d)[None] / omega2
    return np.linalg.inv(gram)


def stacked_probit_design(xd, labels, L):
    """Signed stacked design of the probit stick-breaking likelihood.

    Unit i contributes one row per stick it reaches (min(S_i, L-1) rows): a
    -x_i row for each stick it passes and a +x_i row for the stick it stops
    at. Coefficients are ordered stick-major, (beta_1, ..., beta_{L-1}).
    """
    xd = np.atleast_2d(np.asarray(xd, float))
    n, d = xd.shape
    K = L - 1
    rows = []
    for i in range(n):
        s = int(labels[i])
        for k in range(min(s, K)):
            row = np.zeros(K * d)
            row[k * d:(k + 1) * d] = xd[i] if k + 1 == s else -xd[i]
            rows.append(row)
    return np.array(rows).reshape(len(rows), K * d)


def probit_posterior_sun(xbar, xi, omega2):
    """SUN posterior of probit coefficients under a N(xi, omega2 I) prior."""
    xbar = np.asarray(xbar, float)
    xi = np.asarray(xi, float)
    omega = math.sqrt(omega2)
    raw = omega2 * xbar @ xbar.T + np.eye(xbar.shape[0])
    dinv = 1.0 / np.sqrt(np.diag(raw))
    return SunParams(
        xi=xi,
        omega_scale=np.full(xi.size, omega),
        delta=omega * xbar.T * dinv[None, :],
        gamma=dinv * (xbar @ xi),
        gamma_cov=dinv[:, None] * raw * dinv[None, :],
    )


def step_weights(state: MixtureState, data: ObservedDataset, hp: Hyperparams, rng, sweeps=10):
    """Redraw the probit stick-breaking coefficients of both arms.

    Draws from the unified skew-normal posterior
    ``xi + omega (B0 + Delta Gamma^-1 B1)``. The stacked design is block
    diagonal across sticks, so with the Woodbury identity the draw reduces to
    ``beta_k = xi_k + M_k X_k^T z_k + chol(M_k) e`` where ``z_k = d B1`` is
    the truncated latent vector of stick k (see ``_latent.latent_sweeps``).
    """
    xd = data.design
    K = hp.L - 1
    d = xd.shape[1]
    xi = hp.xi_matrix(data.p)
    for arm in (0, 1):
        labels = np.ascontiguousarray(state.labels(arm), dtype=np.int64)
        gram_inv = _gram_inverses(xd, labels, K, hp.omega2)
        _latent._seed(int(rng.integers(2**32)))
        w = _latent.latent_sweeps(
            xd, labels, np.ascontiguousarray(state.beta(arm).T), xi, gram_inv, int(sweeps)
        )
        chol = np.linalg.cholesky(0.5 * (gram_inv + np.transpose(gram_inv, (0, 2, 1))))
        noise = np.einsum("kce,ke->kc", chol, rng.standard_normal((K, d)))
        beta = (xi + w + noise).T
        if not np.all(np.isfinite(beta)):
            raise NumericalError(f"non-finite probit coefficients for arm {arm}")
        if arm:
            state.beta1 = beta
        else:
            state.beta0 = beta
    return state


def step_impute_post_treatment(state: MixtureState, outcome: OutcomeState,
                               data: ObservedDataset, hp: Hyperparams, rng):
    """Redraw the counterfactual-arm label from the prior weights, then the missing P."""
    treated = data.t == 1
    n = data.n
    labels = np.empty(n, dtype=np.int64)
    for arm, units in ((0, treated), (1, ~treated)):
        if np.any(units):
            w = stick_weights(state.beta(arm), data.x[units])
            labels[units] = rcategorical(w, rng) + 1
    state.s0 = np.where(treated, labels, state.s0)
    state.s1 = np.where(treated, state.s1, labels)

    eta = state.eta[labels - 1]
    var = state.sigma2[labels - 1]
    mean = eta.copy()
    post_var = var.copy()
    if np.any(treated):
        p1 = data.p_obs[treated]
        th = outcome.theta1
        slope = th[2] + th[3] * p1
        informative = np.abs(slope) >= SLOPE_EPS
        safe = np.where(informative, slope, 1.0)
        m1 = (data.y_obs[treated] - th[0] - th[1] * p1) / safe
        v1 = np.exp(outcome.lambda0 + outcome.lambda1 * p1) / safe**2
        prec = 1.0 / var[treated] + np.where(informative, 1.0 / v1, 0.0)
        mt = (eta[treated] / var[treated] + np.where(informative, m1 / v1, 0.0)) / prec
        mean[treated] = mt
        post_var[treated] = 1.0 / prec
    state.p_missing = mean + np.sqrt(post_var) * rng.standard_normal(n)
    return state


# -- outcome steps -------------------------------------------------------------

def _regression_factor(design, y, precision_weights, hp: Hyperparams):
    q = design.shape[1]
    prec = design.T @ (precision_weights[:, None] * design) + np.eye(q) / hp.sigma2_theta
    rhs = design.T @ (precision_weights * y) + hp.mu_theta / hp.sigma2_theta
    for jitter in (0.0, 1e-10, 1e-8):
        try:
            chol = np.linalg.cholesky(prec + jitter * np.eye(q))
            break
        except np.linalg.LinAlgError:
            continue
    else:
        raise NumericalError("outcome-model posterior precision is singular")
    return chol, np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))


def regression_posterior(design, y, precision_weights, hp: Hyperparams):
    """Gaussian posterior (mean, covariance) of weighted linear-regression coefficients."""
    chol, mean = _regression_factor(design, y, precision_weights, hp)
    ci = np.linalg.inv(chol)
    return mean, ci.T @ ci


def _gaussian_regression_draw(design, y, precision_weights, hp: Hyperparams, rng):
    chol, mean = _regression_factor(design, y, precision_weights, hp)
    return mean + np.linalg.solve(chol.T, rng.standard_normal(design.shape[1]))


def outcome_designs(state: MixtureState, data: ObservedDataset):
    """Control design [1, P0] and treated design [1, P1, P0, P1 P0]."""
    p0, p1 = state.potential_post(data)
    ctrl = data.t == 0
    trt = ~ctrl
    d0 = np.column_stack([np.ones(ctrl.sum()), p0[ctrl]])
    d1 = np.column_stack([np.ones(trt.sum()), p1[trt], p0[trt], p1[trt] * p0[trt]])
    return d0, d1


def step_outcome_params(state: MixtureState, outcome: OutcomeState,
                        data: ObservedDataset, hp: Hyperparams, rng):
    """Conjugate heteroscedastic regression updates of theta^(0) and theta^(1).

    Rows are weighted by inverse variances exp(-lambda0) and
    exp(-(lambda0 + lambda1 P(1))).
    """
    ctrl = data.t == 0
    trt = ~ctrl
    d0, d1 = outcome_designs(state, data)
    w0 = np.full(d0.shape[0], math.exp(-outcome.lambda0))
    w1 = np.exp(-(outcome.lambda0 + outcome.lambda1 * data.p_obs[trt]))
    outcome.theta0 = _gaussian_regression_draw(d0, data.y_obs[ctrl], w0, hp, rng)
    outcome.theta1 = _gaussian_regression_draw(d1, data.y_obs[trt], w1, hp, rng)
    return outcome


def outcome_loglik(outcome: OutcomeState, state: MixtureState, data: ObservedDataset,
                   lambda0=None, lambda1=None, treated_only=False):
    """Log-likelihood of the observed outcomes under the given log-variance coefficients."""
    lam0 = outcome.lambda0 if lambda0 is None else lambda0
    lam1 = outcome.lambda1 if lambda1 is None else lambda1
    p0, p1 = state.potential_post(data)
    treated = data.t == 1
    mean = np.where(treated, outcome.mean1(p0, p1), outcome.mean0(p0))
    logvar = lam0 + np.where(treated, lam1 * p1, 0.0)
    if treated_only:
        mean, logvar, y = mean[treated], logvar[treated], data.y_obs[treated]
    else:
        y = data.y_obs
    return float(np.sum(-0.5 * (math.log(2 * math.pi) + logvar + (y - mean) ** 2 * np.exp(-logvar))))


def step_lambda(state: MixtureState, outcome: OutcomeState, data: ObservedDataset,
                hp: Hyperparams, rng):
    """Independence Metropolis updates of lambda0 then lambda1, proposing from the prior."""
    sd = math.sqrt(hp.sigma2_lambda)
    proposal = float(rng.normal(hp.mu_lambda, sd))
    log_ratio = outcome_loglik(outcome, state, data, lambda0=proposal) - outcome_loglik(outcome, state, data)
    if math.log(rng.random()) < log_ratio:
        outcome.lambda0 = proposal
    proposal = float(rng.normal(hp.mu_lambda, sd))
    log_ratio = (outcome_loglik(outcome, state, data, lambda1=proposal, treated_only=True)
                 - outcome_loglik(outcome, state, data, treated_only=True))
    if math.log(rng.random()) < log_ratio:
        outcome.lambda1 = proposal
    return outcome


def step_impute_outcome(state: MixtureState, outcome: OutcomeState, data: ObservedDataset, rng):
    """Posterior-predictive draw of each unit's unobserved outcome."""
    p0, p1 = state.potential_post(data)
    treated = data.t == 1
    mean = np.where(treated, outcome.mean0(p0), outcome.mean1(p0, p1))
    logvar = np.where(treated, outcome.lambda0, outcome.lambda0 + outcome.lambda1 * p1)
    return mean + np.exp(0.5 * logvar) * rng.standard_normal(data.n)


# -- driver ---------------------------------------------------------------------

def _check_finite(step, iteration, *arrays):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"non-finite state after {step} at iteration {iteration}")


def run_chain(data: ObservedDataset, hp: Hyperparams | None = None,
              config: GibbsConfig | None = None, progress=None):
    """Run one chain and return the kept draws.

    ``progress`` (optional) is called as ``progress(iteration, total)`` every
    100 iterations; the same information is logged at INFO level.
    """
    hp = hp or Hyperparams()
    config = config or GibbsConfig()
    data.check_fittable()
    rng = np.random.default_rng(config.seed)
    state, outcome = init_state(data, hp, rng)

    K, n, L, d = config.n_kept, data.n, hp.L, data.p + 1
    store = {
        "eta": np.empty((K, L)), "sigma2": np.empty((K, L)),
        "beta0": np.empty((K, d, L - 1)), "beta1": np.empty((K, d, L - 1)),
        "s0": np.empty((K, n), np.int64), "s1": np.empty((K, n), np.int64),
        "p_missing": np.empty((K, n)), "y_missing": np.empty((K, n)),
        "theta0": np.empty((K, 2)), "theta1": np.empty((K, 4)),
        "lambda0": np.empty(K), "lambda1": np.empty(K),
        "stratum": np.empty((K, n), np.int64), "iteration": np.empty(K, np.int64),
    }
    steps = (
        ("cluster allocation", lambda: step_cluster_allocation(state, data, hp, rng)),
        ("atoms", lambda: step_atoms(state, data, hp, rng)),
        ("weights", lambda: step_weights(state, data, hp, rng, sweeps=config.tmvn_sweeps)),
        ("post-treatment imputation",
         lambda: step_impute_post_treatment(state, outcome, data, hp, rng)),
        ("outcome coefficients", lambda: step_outcome_params(state, outcome, data, hp, rng)),
        ("outcome log-variance", lambda: step_lambda(state, outcome, data, hp, rng)),
    )
    kept = 0
    for it in range(1, config.iterations + 1):
        for name, step in steps:
            try:
                step()
            except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
                raise NumericalError(f"iteration {it}, step '{name}': {exc}") from exc
        _check_finite("sweep", it, state.eta, state.sigma2, state.beta0, state.beta1,
                      state.p_missing, outcome.theta0, outcome.theta1,
                      [outcome.lambda0, outcome.lambda1])
        if it % 100 == 0:
            log.info("iteration %d / %d", it, config.iterations)
            if progress is not None:
                progress(it, config.iterations)
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0 and kept < K:
            y_missing = step_impute_outcome(state, outcome, data, rng)
            store["eta"][kept] = state.eta
            store["sigma2"][kept] = state.sigma2
            store["beta0"][kept] = state.beta0
            store["beta1"][kept] = state.beta1
            store["s0"][kept] = state.s0
            store["s1"][kept] = state.s1
            store["p_missing"][kept] = state.p_missing
            store["y_missing"][kept] = y_missing
            store["theta0"][kept] = outcome.theta0
            store["theta1"][kept] = outcome.theta1
            store["lambda0"][kept] = outcome.lambda0
            store["lambda1"][kept] = outcome.lambda1
            store["stratum"][kept] = assign_strata(state.eta, state.s0, state.s1)
            store["iteration"][kept] = it
            kept += 1
    return PosteriorDraws(**store)
