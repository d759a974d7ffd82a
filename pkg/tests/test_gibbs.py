import math

import numpy as np
import pytest
from scipy import optimize, stats

from casbah import gibbs
from casbah.dist import invgamma_mean, invgamma_var, sample_sun
from casbah.exceptions import InputError, NumericalError
from casbah.gibbs import (
    GibbsConfig,
    _gram_inverses,
    atom_location_posterior,
    atom_scale_posterior,
    outcome_loglik,
    probit_posterior_sun,
    regression_posterior,
    run_chain,
    stacked_probit_design,
    step_atoms,
    step_cluster_allocation,
    step_impute_outcome,
    step_impute_post_treatment,
    step_lambda,
    step_outcome_params,
    step_weights,
)
from casbah.model import Hyperparams, MixtureState, ObservedDataset, OutcomeState

from oracles import grid_cdf, grid_moments, grid_moments_2d, probit_da_chains


def make_state(L, n, p=0, eta=None, sigma2=None, beta=None, s0=None, s1=None, p_missing=None):
    beta = np.zeros((p + 1, L - 1)) if beta is None else beta
    return MixtureState(
        eta=np.zeros(L) if eta is None else np.asarray(eta, float),
        sigma2=np.ones(L) if sigma2 is None else np.asarray(sigma2, float),
        beta0=np.array(beta, float), beta1=np.array(beta, float),
        s0=np.ones(n, np.int64) if s0 is None else np.asarray(s0),
        s1=np.ones(n, np.int64) if s1 is None else np.asarray(s1),
        p_missing=np.zeros(n) if p_missing is None else np.asarray(p_missing, float),
    )


def repeated(n, t, p, y, x=None):
    x = np.zeros((n, 0)) if x is None else np.tile(x, (n, 1))
    return ObservedDataset(x=x, t=np.full(n, t), p_obs=np.full(n, p, float), y_obs=np.full(n, y, float))


# -- cluster allocation ----------------------------------------------------------

def test_allocation_first_stick_takes_all(rng):
    data = repeated(500, 0, 1.0, 0.0)
    state = make_state(4, 500, beta=np.full((1, 3), 40.0), eta=[5, 1, 1, 1])
    step_cluster_allocation(state, data, Hyperparams(L=4), rng)
    assert np.all(state.s0 == 1) and np.all(state.s1 == 1)


def test_allocation_sharp_atoms(rng):
    data = repeated(2000, 0, 1.0, 0.0)
    state = make_state(2, 2000, eta=[1.0, 2.0], sigma2=[0.01, 0.01])
    step_cluster_allocation(state, data, Hyperparams(L=2), rng)
    # P(label 1) = 1/(1 + exp(-50))
    assert np.all(state.s0 == 1)


def test_allocation_equal_atoms_uniform(rng):
    n = 40_000
    data = repeated(n, 1, 0.3, 0.0)
    # alpha = Phi^-1(1/2) for the first stick of L=2 gives weights (1/2, 1/2)
    state = make_state(2, n, eta=[0.0, 0.0], sigma2=[1.0, 1.0])
    step_cluster_allocation(state, data, Hyperparams(L=2), rng)
    share = np.mean(state.s1 == 1)
    assert abs(share - 0.5) < 4 * math.sqrt(0.25 / n)


def test_allocation_underflow_is_not_an_error(rng):
    data = repeated(10, 0, 50.0, 0.0)
    state = make_state(3, 10, eta=[0.0, 1.0, 2.0], sigma2=[0.05, 0.05, 0.05])
    step_cluster_allocation(state, data, Hyperparams(L=3), rng)
    assert np.all(state.s0 == 3)


# -- atoms -----------------------------------------------------------------------

def one_value_problem():
    data = repeated(1, 0, 2.0, 0.0)
    state = make_state(3, 1, sigma2=[1.0, 1.0, 1.0], s0=[1], s1=[2], p_missing=[5.0])
    return data, state


def test_atom_location_closed_form():
    data, state = one_value_problem()
    hp = Hyperparams(L=3)
    p0, p1 = state.potential_post(data)
    mean, var = atom_location_posterior(np.concatenate([p0, p1]), np.array([0, 1]), state.sigma2, hp)
    assert mean[0] == pytest.approx(2.0 / 1.05, abs=1e-12)  # 1.9048
    assert var[0] == pytest.approx(1 / 1.05, abs=1e-12)
    # empty cluster collapses to the prior
    assert (mean[2], var[2]) == (0.0, 20.0)


def test_atom_location_matches_grid():
    data, state = one_value_problem()
    hp = Hyperparams(L=3)
    grid = np.linspace(-30, 30, 2000)
    gm, gv = grid_moments(lambda e: stats.norm.logpdf(e, 0, math.sqrt(20)) + stats.norm.logpdf(2.0, e, 1.0), grid)
    mean, var = atom_location_posterior(np.array([2.0, 5.0]), np.array([0, 1]), state.sigma2, hp)
    assert mean[0] == pytest.approx(gm, rel=0.01)
    assert var[0] == pytest.approx(gv, rel=0.01)


def test_atom_scale_closed_form_and_grid():
    hp = Hyperparams(L=2)
    eta = np.array([1.5, 0.0])
    h = math.sqrt(0.5)
    values = np.array([1.5 - h, 1.5 + h])  # SSE = 1
    shape, scale = atom_scale_posterior(values, np.array([0, 0]), eta, hp)
    assert shape[0] == pytest.approx(3.0) and scale[0] == pytest.approx(1.0)
    assert (shape[1], scale[1]) == (2.0, 0.5)

    grid = np.exp(np.linspace(math.log(1e-3), math.log(1e5), 2000))

    def logpost(s):
        prior = hp.gamma1 * math.log(hp.gamma2) - math.lgamma(hp.gamma1) - (hp.gamma1 + 1) * np.log(s) - hp.gamma2 / s
        return prior + sum(stats.norm.logpdf(v, 1.5, np.sqrt(s)) for v in values)

    gm, gv = grid_moments(logpost, grid)
    assert invgamma_mean(3.0, 1.0) == pytest.approx(gm, rel=0.01)
    assert invgamma_var(3.0, 1.0) == pytest.approx(gv, rel=0.01)


def test_step_atoms_draws_follow_conditionals(rng):
    data, state = one_value_problem()
    hp = Hyperparams(L=3)
    m = 20_000
    eta = np.empty(m)
    for i in range(m):
        state.sigma2 = np.ones(3)
        step_atoms(state, data, hp, rng)
        eta[i] = state.eta[0]
    se = math.sqrt(1 / 1.05 / m)
    assert abs(eta.mean() - 2.0 / 1.05) < 4 * se
    assert eta.var() == pytest.approx(1 / 1.05, rel=0.05)


# -- probit weights --------------------------------------------------------------

def test_stacked_design_rows():
    xd = np.array([[1.0, 2.0], [1.0, -1.0]])
    xbar = stacked_probit_design(xd, np.array([2, 1]), L=3)
    expected = np.array([
        [-1.0, -2.0, 0.0, 0.0],   # unit 1 passes stick 1
        [0.0, 0.0, 1.0, 2.0],     # and stops at stick 2
        [1.0, -1.0, 0.0, 0.0],    # unit 2 stops at stick 1
    ])
    assert np.array_equal(xbar, expected)
    # the last label reaches only L-1 sticks
    assert stacked_probit_design(xd[:1], np.array([3]), L=3).shape == (2, 4)


def test_gram_inverses_match_stacked_design(rng):
    n, p, L = 30, 2, 6
    xd = np.column_stack([np.ones(n), rng.normal(size=(n, p))])
    labels = rng.integers(1, L + 1, size=n)
    xbar = stacked_probit_design(xd, labels, L)
    full = np.linalg.inv(xbar.T @ xbar + np.eye(xbar.shape[1]) / 20.0)
    fast = _gram_inverses(xd, labels, L - 1, 20.0)
    d = p + 1
    for k in range(L - 1):
        blk = slice(k * d, (k + 1) * d)
        assert np.allclose(full[blk, blk], fast[k], atol=1e-12)


def test_step_weights_deterministic(toy):
    hp = Hyperparams(L=5)
    a = make_state(5, toy.n, p=toy.p, s0=np.arange(toy.n) % 5 + 1, s1=np.arange(toy.n) % 3 + 1)
    b = a.copy()
    step_weights(a, toy, hp, np.random.default_rng(4))
    step_weights(b, toy, hp, np.random.default_rng(4))
    assert np.array_equal(a.beta0, b.beta0) and np.array_equal(a.beta1, b.beta1)
    assert a.beta0.shape == (toy.p + 1, 4)


def test_step_weights_unreached_stick_is_prior(rng):
    hp = Hyperparams(L=3)
    data = repeated(5, 0, 0.0, 0.0)
    state = make_state(3, 5)  # every unit stops at stick 1; nobody reaches stick 2
    m = 6000
    draws = np.empty(m)
    for i in range(m):
        step_weights(state, data, hp, rng)
        draws[i] = state.beta0[0, 1]
    assert abs(draws.mean()) < 4 * math.sqrt(20 / m)
    assert draws.var() == pytest.approx(20.0, rel=0.08)


P0_L2_N3_LABELS = np.array([1, 2, 1])


def p0_l2_n3_logpost(b):
    # units 1, 3 stop at stick 1, unit 2 passes it: Phi(b)^2 Phi(-b) N(b; 0, 20)
    return 2 * stats.norm.logcdf(b) + stats.norm.logcdf(-b) - b * b / 40.0


def test_dense_sun_matches_exact_posterior(rng):
    xbar = stacked_probit_design(np.ones((3, 1)), P0_L2_N3_LABELS, 2)
    params = probit_posterior_sun(xbar, np.zeros(1), 20.0)
    draws = sample_sun(params, rng, sweeps=10, size=50_000)[:, 0]
    cdf = grid_cdf(p0_l2_n3_logpost, -40, 40)
    assert stats.kstest(draws, cdf).statistic < 0.02


def test_fast_weights_match_exact_posterior(rng):
    hp = Hyperparams(L=2)
    data = repeated(3, 0, 0.0, 0.0)
    state = make_state(2, 3, s0=P0_L2_N3_LABELS.copy(), s1=P0_L2_N3_LABELS.copy())
    m = 20_000
    draws = np.empty((m, 2))
    for i in range(m):
        step_weights(state, data, hp, rng)
        draws[i] = state.beta0[0, 0], state.beta1[0, 0]
    cdf = grid_cdf(p0_l2_n3_logpost, -40, 40)
    for j in range(2):
        assert stats.kstest(draws[:, j], cdf).statistic < 0.02


def test_fast_weights_match_dense_sun_with_covariates(rng):
    # p=1, L=3: compare the Woodbury kernel with the dense SUN representation
    xd = np.column_stack([np.ones(6), [0.0, 1.0, 1.0, 0.0, 1.0, 0.5]])
    labels = np.array([1, 2, 3, 1, 2, 3])
    hp = Hyperparams(L=3)
    data = ObservedDataset(x=xd[:, 1:], t=np.zeros(6, int), p_obs=np.zeros(6), y_obs=np.zeros(6))
    xbar = stacked_probit_design(xd, labels, 3)
    dense = sample_sun(probit_posterior_sun(xbar, np.zeros(4), 20.0), rng, sweeps=200, size=20_000)
    state = make_state(3, 6, p=1, s0=labels.copy(), s1=labels.copy())
    m = 20_000
    fast = np.empty((m, 4))
    for i in range(m):
        step_weights(state, data, hp, rng)
        fast[i] = state.beta0.T.ravel()  # stick-major like the stacked design
    for j in range(4):
        assert stats.ks_2samp(fast[:, j], dense[:, j]).statistic < 0.03


def test_da_oracle_agrees_with_exact_posterior(rng):
    xbar = stacked_probit_design(np.ones((3, 1)), P0_L2_N3_LABELS, 2)
    draws = probit_da_chains(xbar, 20.0, rng, chains=20_000, steps=300)[:, 0]
    cdf = grid_cdf(p0_l2_n3_logpost, -40, 40)
    assert stats.kstest(draws, cdf).statistic < 0.02


# -- post-treatment imputation ---------------------------------------------------

def imputation_setup(n, t, y, p, theta1=(0.0, 0.0, 1.0, 0.0), lam=(0.0, 0.0)):
    data = repeated(n, t, p, y)
    # first stick certain in both arms, so the counterfactual label is always 1
    state = make_state(2, n, eta=[0.0, 7.0], sigma2=[1.0, 1.0], beta=np.full((1, 1), 40.0))
    outcome = OutcomeState(np.zeros(2), np.array(theta1, float), *lam)
    return data, state, outcome


def test_impute_precision_weighting(rng):
    n = 100_000
    data, state, outcome = imputation_setup(n, 1, y=3.0, p=1.0)
    step_impute_post_treatment(state, outcome, data, Hyperparams(L=2), rng)
    # m1 = 3, v1 = 1, cluster N(0, 1) -> N(1.5, 0.5)
    assert abs(state.p_missing.mean() - 1.5) < 4 * math.sqrt(0.5 / n)
    assert state.p_missing.var() == pytest.approx(0.5, rel=0.02)
    assert np.all(state.s0 == 1)


def test_impute_uninformative_slope(rng):
    n = 100_000
    data, state, outcome = imputation_setup(n, 1, y=3.0, p=1.0, theta1=(0.0, 0.0, 0.0, 0.0))
    step_impute_post_treatment(state, outcome, data, Hyperparams(L=2), rng)
    assert abs(state.p_missing.mean()) < 4 * math.sqrt(1 / n)
    assert state.p_missing.var() == pytest.approx(1.0, rel=0.02)


@pytest.mark.parametrize("y", [-50.0, 3.0, 80.0])
def test_impute_control_ignores_outcome(rng, y):
    n = 100_000
    data, state, outcome = imputation_setup(n, 0, y=y, p=1.0)
    step_impute_post_treatment(state, outcome, data, Hyperparams(L=2), rng)
    assert abs(state.p_missing.mean()) < 4 * math.sqrt(1 / n)
    assert state.p_missing.var() == pytest.approx(1.0, rel=0.02)
    assert np.all(state.s1 == 1)


def test_impute_redraws_counterfactual_label_from_prior(rng):
    n = 50_000
    data = repeated(n, 1, 0.0, 0.0)
    state = make_state(2, n, s0=np.full(n, 2), s1=np.full(n, 2))  # beta = 0: weights (1/2, 1/2)
    outcome = OutcomeState(np.zeros(2), np.zeros(4), 0.0, 0.0)
    step_impute_post_treatment(state, outcome, data, Hyperparams(L=2), rng)
    assert abs(np.mean(state.s0 == 1) - 0.5) < 4 * math.sqrt(0.25 / n)
    assert np.all(state.s1 == 2)  # observed arm untouched


# -- outcome model ---------------------------------------------------------------

def test_theta0_matches_grid():
    hp = Hyperparams()
    lam0 = -0.5
    design = np.array([[1.0, 1.5]])
    y = np.array([4.0])
    mean, cov = regression_posterior(design, y, np.full(1, math.exp(-lam0)), hp)

    def logpost(a, b):
        resid = y[0] - a - 1.5 * b
        return -(a * a + b * b) / (2 * hp.sigma2_theta) - 0.5 * resid**2 * math.exp(-lam0)

    g = np.linspace(-60, 60, 2000)
    gm, gcov = grid_moments_2d(logpost, g, g)
    for j in range(2):
        sd = math.sqrt(gcov[j, j])
        assert abs(mean[j] - gm[j]) <= 0.01 * max(abs(gm[j]), sd)
        assert cov[j, j] == pytest.approx(gcov[j, j], rel=0.01)


def test_theta1_axis_problem_matches_grid():
    hp = Hyperparams()
    lam0, lam1 = 0.3, 0.1
    design = np.array([[1.0, 0.0, 0.0, 0.0]])  # P(1) = P(0) = 0
    w = math.exp(-(lam0 + lam1 * 0.0))
    mean, cov = regression_posterior(design, np.array([2.5]), np.array([w]), hp)
    g = np.linspace(-60, 60, 2000)
    gm, gv = grid_moments(lambda a: -a * a / 200.0 - 0.5 * (2.5 - a) ** 2 * w, g)
    assert mean[0] == pytest.approx(gm, rel=0.01)
    assert cov[0, 0] == pytest.approx(gv, rel=0.01)
    assert np.allclose(mean[1:], 0.0) and np.allclose(np.diag(cov)[1:], 100.0)


def test_theta1_general_problem_matches_optimizer():
    hp = Hyperparams()
    p1, p0, y, lam0, lam1 = 1.3, 0.7, 2.0, -0.2, 0.4
    row = np.array([1.0, p1, p0, p1 * p0])
    w = math.exp(-(lam0 + lam1 * p1))
    mean, cov = regression_posterior(row[None, :], np.array([y]), np.array([w]), hp)

    def neglog(th):
        return th @ th / 200.0 + 0.5 * w * (y - row @ th) ** 2

    opt = optimize.minimize(neglog, np.zeros(4), method="BFGS", options={"gtol": 1e-12})
    h = 1e-3
    hess = np.empty((4, 4))
    for i in range(4):
        for j in range(4):
            e_i, e_j = np.eye(4)[i] * h, np.eye(4)[j] * h
            hess[i, j] = (neglog(opt.x + e_i + e_j) - neglog(opt.x + e_i - e_j)
                          - neglog(opt.x - e_i + e_j) + neglog(opt.x - e_i - e_j)) / (4 * h * h)
    assert np.allclose(mean, opt.x, atol=1e-5)
    assert np.allclose(np.diag(cov), np.diag(np.linalg.inv(hess)), rtol=0.01)


def test_theta0_flat_prior_solves_weighted_least_squares():
    hp = Hyperparams(sigma2_theta=1e12)
    design = np.array([[1.0, 0.5], [1.0, 2.0], [1.0, -1.0]])
    y = np.array([1.0, 3.5, -0.2])
    w = np.array([2.0, 0.5, 1.0])
    mean, _ = regression_posterior(design, y, w, hp)
    wls = np.linalg.solve(design.T @ (w[:, None] * design), design.T @ (w * y))
    assert np.allclose(mean, wls, atol=1e-8)
    # a single unit: the mean still satisfies the normal equations
    mean1, _ = regression_posterior(design[:1], y[:1], w[:1], hp)
    assert design[0] @ mean1 == pytest.approx(y[0], abs=1e-6)


def test_step_outcome_params_draws(toy, rng):
    hp = Hyperparams()
    state = make_state(2, toy.n, p=toy.p, p_missing=np.linspace(0, 2, toy.n))
    outcome = OutcomeState(np.zeros(2), np.zeros(4), -0.3, 0.2)
    d0, d1 = gibbs.outcome_designs(state, toy)
    trt = toy.t == 1
    m0, c0 = regression_posterior(d0, toy.y_obs[~trt], np.full(d0.shape[0], math.exp(0.3)), hp)
    m1, c1 = regression_posterior(d1, toy.y_obs[trt], np.exp(-(-0.3 + 0.2 * toy.p_obs[trt])), hp)
    m = 20_000
    t0 = np.empty((m, 2))
    t1 = np.empty((m, 4))
    for i in range(m):
        step_outcome_params(state, outcome, toy, hp, rng)
        t0[i], t1[i] = outcome.theta0, outcome.theta1
    for draws, mean, cov in ((t0, m0, c0), (t1, m1, c1)):
        sd = np.sqrt(np.diag(cov))
        assert np.all(np.abs(draws.mean(axis=0) - mean) < 4 * sd / math.sqrt(m))
        assert np.allclose(draws.var(axis=0), np.diag(cov), rtol=0.05)


def test_no_treated_units_gives_prior(rng):
    hp = Hyperparams()
    data = repeated(4, 0, 1.0, 2.0)
    state = make_state(2, 4)
    outcome = OutcomeState()
    draws = np.array([step_outcome_params(state, outcome, data, hp, rng).theta1.copy() for _ in range(4000)])
    assert np.allclose(draws.var(axis=0), 100.0, rtol=0.1)


def test_lambda_ratio_identities(toy):
    state = make_state(2, toy.n, p=toy.p, p_missing=np.full(toy.n, 1.2))
    outcome = OutcomeState(np.array([1.0, 2.0]), np.array([1.0, 2.0, -1.0, 0.5]), -0.5, 0.1)
    base = outcome_loglik(outcome, state, toy)
    assert outcome_loglik(outcome, state, toy, lambda0=outcome.lambda0) - base == 0.0
    # direct evaluation with scipy
    p0, p1 = state.potential_post(toy)
    trt = toy.t == 1
    mean = np.where(trt, outcome.mean1(p0, p1), outcome.mean0(p0))
    sd = np.exp(0.5 * (-0.5 + np.where(trt, 0.1 * p1, 0.0)))
    assert base == pytest.approx(stats.norm.logpdf(toy.y_obs, mean, sd).sum(), rel=1e-12)
    # variance e^-20 against O(1) residuals: acceptance probability below 1e-6
    assert outcome_loglik(outcome, state, toy, lambda0=-20.0) - base < math.log(1e-6)


def test_lambda_chain_recovers_truth(rng):
    n = 400
    g = np.random.default_rng(1)
    t = np.tile([0, 1], n // 2)
    p1 = g.normal(2.0, 0.5, n)
    p0 = g.normal(1.5, 0.5, n)
    outcome = OutcomeState(np.array([1.0, 2.0]), np.array([1.0, 2.0, -1.0, 0.5]), -0.5, 0.1)
    mean = np.where(t == 1, outcome.mean1(p0, p1), outcome.mean0(p0))
    sd = np.exp(0.5 * (-0.5 + np.where(t == 1, 0.1 * p1, 0.0)))
    y = mean + sd * g.standard_normal(n)
    data = ObservedDataset(x=np.zeros((n, 0)), t=t, p_obs=np.where(t == 1, p1, p0), y_obs=y)
    state = make_state(2, n, p_missing=np.where(t == 1, p0, p1))
    outcome.lambda0, outcome.lambda1 = 0.0, 0.0
    hp = Hyperparams()
    trace = np.empty((6000, 2))
    for i in range(6000):
        step_lambda(state, outcome, data, hp, rng)
        trace[i] = outcome.lambda0, outcome.lambda1
    kept = trace[1000:]
    assert abs(kept[:, 0].mean() + 0.5) < 3 * kept[:, 0].std()


def test_impute_outcome_moments(rng):
    n = 10_000
    data = repeated(n, 1, 1.0, 0.0)
    state = make_state(2, n, p_missing=np.full(n, 2.0))
    outcome = OutcomeState(np.array([1.0, 0.5]), np.zeros(4), math.log(2.0), 0.0)
    y0 = step_impute_outcome(state, outcome, data, rng)
    assert abs(y0.mean() - 2.0) < 3 * math.sqrt(2.0 / n)

    outcome = OutcomeState(np.zeros(2), np.zeros(4), 0.0, 0.0)
    assert stats.kstest(step_impute_outcome(state, outcome, data, rng), "norm").pvalue > 0.001

    ctrl = repeated(100, 0, 30.0, 0.0)
    cstate = make_state(2, 100, p_missing=np.full(100, 30.0))
    outcome = OutcomeState(np.zeros(2), np.array([1.0, 1.0, 0.0, 0.0]), 0.0, -5.0)
    y1 = step_impute_outcome(cstate, outcome, ctrl, rng)
    assert np.max(np.abs(y1 - 31.0)) < 1e-12


# -- driver ----------------------------------------------------------------------

def test_chain_bookkeeping(toy):
    draws = run_chain(toy, Hyperparams(L=5), GibbsConfig(10, 0, 1, 5, 1))
    assert len(draws) == 10
    assert np.array_equal(draws.iteration, np.arange(1, 11))
    draws = run_chain(toy, Hyperparams(L=5), GibbsConfig(20, 5, 4, 5, 1))
    assert len(draws) == 3 == GibbsConfig(20, 5, 4).n_kept
    assert np.array_equal(draws.iteration, [9, 13, 17])
    assert draws.s0.shape == (3, toy.n) and draws.beta1.shape == (3, toy.p + 1, 4)
    assert np.all((draws.s0 >= 1) & (draws.s0 <= 5))


def test_chain_deterministic(toy):
    cfg = GibbsConfig(30, 10, 2, 5, 9)
    a = run_chain(toy, Hyperparams(L=6), cfg)
    b = run_chain(toy, Hyperparams(L=6), cfg)
    for name in vars(a):
        assert np.array_equal(getattr(a, name), getattr(b, name)), name


def test_chain_progress_callback(toy):
    calls = []
    run_chain(toy, Hyperparams(L=3), GibbsConfig(200, 100, 1, 2, 0), progress=lambda i, r: calls.append(i))
    assert calls == [100, 200]


def test_chain_reports_failing_step(toy, monkeypatch):
    def broken(state, data, hp, rng):
        raise NumericalError("boom")

    monkeypatch.setattr(gibbs, "step_atoms", broken)
    with pytest.raises(NumericalError, match=r"iteration 1, step 'atoms'"):
        run_chain(toy, Hyperparams(L=3), GibbsConfig(5, 0, 1, 2, 0))


def test_config_validation():
    with pytest.raises(InputError):
        GibbsConfig(10, 10)
    with pytest.raises(InputError):
        GibbsConfig(10, 0, thin=0)
    with pytest.raises(InputError):
        GibbsConfig(10, 0, seed=-1)


def test_single_arm_rejected():
    data = repeated(5, 1, 0.0, 0.0)
    with pytest.raises(InputError):
        run_chain(data, Hyperparams(L=3), GibbsConfig(5, 0))


def _model_data(rng, n=200):
    """Two well separated shared atoms with probit weights in one binary covariate."""
    eta = np.array([0.0, 3.0])
    sig2 = np.array([0.1, 0.1])
    x = rng.integers(0, 2, n).astype(float)
    t = rng.integers(0, 2, n)
    prob_first = stats.norm.cdf(np.where(t == 1, -1.0 + 2.0 * x, 1.0 - 2.0 * x))
    lab = np.where(rng.random(n) < prob_first, 0, 1)
    p = eta[lab] + np.sqrt(sig2[lab]) * rng.standard_normal(n)
    y = 1.0 + 2.0 * p + 0.5 * rng.standard_normal(n)
    return ObservedDataset(x=x[:, None], t=t, p_obs=p, y_obs=y), lab, eta


@pytest.mark.slow
def test_atom_calibration_on_model_data():
    covered = total = 0
    for rep in range(20):
        g = np.random.default_rng(1000 + rep)
        data, lab, eta = _model_data(g)
        draws = run_chain(data, Hyperparams(L=6), GibbsConfig(600, 200, 1, 10, rep))
        obs_label = np.where(data.t == 1, draws.s1, draws.s0)  # K x n
        for j in range(2):
            unit = int(np.flatnonzero(lab == j)[0])
            vals = draws.eta[np.arange(len(draws)), obs_label[:, unit] - 1]
            lo, hi = np.quantile(vals, [0.05, 0.95])
            covered += lo <= eta[j] <= hi
            total += 1
    assert covered / total >= 0.8
