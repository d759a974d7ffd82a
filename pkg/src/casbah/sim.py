"""Simulation scenarios and the replication harness.

The covariate rates (Bernoulli(0.5)) and the multinomial-logit rules that map
covariates to strata are not given by the published design; the constants
below are our own choice. Atoms, outcome coefficients and log-variance
coefficients are the published ones.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .exceptions import CasbahError, InputError
from .gibbs import GibbsConfig, run_chain
from .model import Hyperparams, ObservedDataset
from .strata import STRATA, StratumLabel, adjusted_rand_index, summarize

__all__ = [
    "StratumSpec",
    "ScenarioSpec",
    "SyntheticTruth",
    "scenario",
    "generate",
    "population_tau",
    "ReplicateResult",
    "StudyResult",
    "run_replicate",
    "replicate_study",
]

log = logging.getLogger(__name__)

D, P, N = StratumLabel.DISSOCIATIVE, StratumLabel.POSITIVE, StratumLabel.NEGATIVE


@dataclass(frozen=True)
class StratumSpec:
    label: StratumLabel
    mean0: float
    var0: float
    mean1: float
    var1: float
    # multinomial-logit allocation score: intercept followed by one coefficient per covariate
    score: tuple


@dataclass(frozen=True)
class ScenarioSpec:
    id: int
    strata: tuple
    theta0: tuple
    theta1: tuple
    treatment_coef: tuple
    treatment_interaction: tuple = ()  # (coef, j, k) terms added to the treatment linear predictor
    n: int = 500
    p: int = 2
    covariate_prob: float = 0.5
    lambda0: float = -0.5
    lambda1: float = 0.1

    def __post_init__(self):
        if self.n < 0:
            raise InputError("n must be nonnegative")
        if len(self.treatment_coef) != self.p:
            raise InputError("treatment_coef must have one entry per covariate")
        for s in self.strata:
            if len(s.score) != self.p + 1:
                raise InputError(f"stratum {s.label.short}: score needs {self.p + 1} entries")
            if s.var0 <= 0 or s.var1 <= 0:
                raise InputError("stratum variances must be positive")

    def with_n(self, n):
        return ScenarioSpec(**{**self.__dict__, "n": int(n)})

    @property
    def labels(self):
        return tuple(s.label for s in self.strata)


def _two_strata(diss, pos, theta1):
    return dict(
        strata=(
            StratumSpec(D, *diss, *diss, score=(0.0, 0.0, 0.0)),
            StratumSpec(P, *pos, score=(-5.0, 9.0, 1.0)),
        ),
        theta0=(1.0, 2.0),
        theta1=theta1,
        treatment_coef=(0.4, 0.6),
    )


def _three_strata(diss, pos, neg, theta1, p=2):
    pad = (0.0,) * (p - 2)
    return dict(
        strata=(
            StratumSpec(D, *diss, *diss, score=(0.0, 0.0, 0.0) + pad),
            StratumSpec(P, *pos, score=(-5.0, 10.0, 0.0) + pad),
            StratumSpec(N, *neg, score=(-5.0, -10.0, 10.0) + pad),
        ),
        theta0=(1.0, 2.0),
        theta1=theta1,
        treatment_coef=(0.4, 0.6),
    )


def scenario(k, n=500):
    """Published simulation scenario ``k`` (1-5) with sample size ``n``."""
    if k == 1:
        kw = _two_strata((1.0, 0.05), (2.0, 0.05, 3.0, 0.05), (1.0, 2.0, -1.0, 0.5))
    elif k == 2:
        kw = _three_strata((2.0, 0.05), (2.0, 0.05, 3.0, 0.05), (2.0, 0.05, 1.0, 0.05),
                           (1.0, 1.2, -1.0, 1.0))
    elif k == 3:
        kw = _two_strata((1.5, 0.12), (2.0, 0.1, 2.5, 0.08), (1.0, 1.2, -0.8, 0.5))
    elif k == 4:
        kw = _three_strata((1.5, 0.12), (2.0, 0.1, 2.5, 0.08), (2.0, 0.1, 1.5, 0.12),
                           (1.0, 1.2, -0.8, 0.5))
    elif k == 5:
        kw = _three_strata((2.0, 0.05), (3.0, 0.05, 4.0, 0.05), (2.0, 0.05, 1.0, 0.05),
                           (1.0, 1.2, -1.0, 0.5), p=5)
        diss, pos, neg = kw["strata"]
        kw["strata"] = (
            diss,
            StratumSpec(P, pos.mean0, pos.var0, pos.mean1, pos.var1,
                        score=(-5.0, 10.0, 0.0, 0.5, -0.5, 0.0)),
            StratumSpec(N, neg.mean0, neg.var0, neg.mean1, neg.var1,
                        score=(-5.0, -10.0, 10.0, -0.5, 0.0, 0.5)),
        )
        kw["treatment_coef"] = (0.4, 0.6, -0.3, 0.0, 0.0)
        kw["treatment_interaction"] = ((0.2, 3, 4),)
        return ScenarioSpec(id=5, n=n, p=5, **kw)
    else:
        raise InputError(f"scenario must be one of 1..5, got {k}")
    return ScenarioSpec(id=k, n=n, **kw)


@dataclass
class SyntheticTruth:
    p0: np.ndarray
    p1: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    stratum: np.ndarray
    tau: np.ndarray  # sample (negative, dissociative, positive) effects; NaN when the stratum is empty

    @property
    def n(self):
        return self.p0.size


def _expit(v):
    return special.expit(v)


def generate(spec: ScenarioSpec, rng):
    """Draw covariates, treatment, strata and all potential values; mask by treatment."""
    n, p = spec.n, spec.p
    x = (rng.random((n, p)) < spec.covariate_prob).astype(float)
    lin = x @ np.asarray(spec.treatment_coef, float)
    for coef, j, k in spec.treatment_interaction:
        lin = lin + coef * x[:, j] * x[:, k]
    # the treatment model's "logit(.)" is read as the inverse logit
    t = (rng.random(n) < _expit(lin)).astype(np.int64)

    scores = np.column_stack(
        [s.score[0] + x @ np.asarray(s.score[1:], float) for s in spec.strata]
    ) if n else np.zeros((0, len(spec.strata)))
    prob = special.softmax(scores, axis=1) if n else scores
    cum = np.cumsum(prob, axis=1)
    which = (cum < rng.random(n)[:, None]).sum(axis=1) if n else np.zeros(0, np.int64)
    which = np.minimum(which, len(spec.strata) - 1)

    m0 = np.array([s.mean0 for s in spec.strata])[which]
    v0 = np.array([s.var0 for s in spec.strata])[which]
    m1 = np.array([s.mean1 for s in spec.strata])[which]
    v1 = np.array([s.var1 for s in spec.strata])[which]
    p0 = m0 + np.sqrt(v0) * rng.standard_normal(n)
    p1 = m1 + np.sqrt(v1) * rng.standard_normal(n)

    th0, th1 = spec.theta0, spec.theta1
    mu0 = th0[0] + th0[1] * p0
    mu1 = th1[0] + th1[1] * p1 + th1[2] * p0 + th1[3] * p0 * p1
    y0 = mu0 + math.exp(0.5 * spec.lambda0) * rng.standard_normal(n)
    y1 = mu1 + np.exp(0.5 * (spec.lambda0 + spec.lambda1 * p1)) * rng.standard_normal(n)

    stratum = np.array([int(s.label) for s in spec.strata], dtype=np.int64)[which]
    tau = np.full(3, np.nan)
    for j, s in enumerate(STRATA):
        member = stratum == s
        if member.any():
            tau[j] = float(np.mean(y1[member] - y0[member]))

    p_obs = np.where(t == 1, p1, p0)
    y_obs = np.where(t == 1, y1, y0)
    data = ObservedDataset(x=x.reshape(n, p), t=t, p_obs=p_obs, y_obs=y_obs)
    return data, SyntheticTruth(p0, p1, y0, y1, stratum, tau)


def population_tau(spec: ScenarioSpec):
    """Population principal effects implied by the stratum atoms and outcome coefficients.

    Within a stratum P(0) and P(1) are independent, so E[P(0)P(1)] is the
    product of the atom means.
    """
    th0, th1 = spec.theta0, spec.theta1
    out = np.full(3, np.nan)
    for s in spec.strata:
        ey1 = th1[0] + th1[1] * s.mean1 + th1[2] * s.mean0 + th1[3] * s.mean0 * s.mean1
        ey0 = th0[0] + th0[1] * s.mean0
        out[STRATA.index(s.label)] = ey1 - ey0
    return out


# -- replication -------------------------------------------------------------------

@dataclass
class ReplicateResult:
    index: int
    failed: bool = False
    error: str = ""
    bias_p: float = math.nan
    bias_y: float = math.nan
    ari: float = math.nan
    strata_count: int = 0
    tau_hat: np.ndarray = field(default_factory=lambda: np.full(3, np.nan))
    tau_true: np.ndarray = field(default_factory=lambda: np.full(3, np.nan))
    gap_hat: np.ndarray = field(default_factory=lambda: np.full(3, np.nan))


def _replicate_seeds(master_seed, n_replicates):
    children = np.random.SeedSequence(master_seed).spawn(n_replicates)
    return [tuple(int(v) for v in c.generate_state(2)) for c in children]


def run_replicate(spec, hp, config, index, data_seed, chain_seed):
    """Generate one dataset, fit it, and score the fit against the truth."""
    result = ReplicateResult(index=index)
    data, truth = generate(spec, np.random.default_rng(data_seed))
    result.tau_true = truth.tau
    cfg = GibbsConfig(config.iterations, config.burn_in, config.thin, config.tmvn_sweeps,
                      chain_seed % 2**63)
    try:
        draws = run_chain(data, hp, cfg)
    except CasbahError as exc:
        result.failed = True
        result.error = str(exc)
        return result
    p0, p1, y0, y1 = draws.potential_outcomes(data)
    result.bias_p = float(np.mean((p1 - p0).mean(axis=1)) - np.mean(truth.p1 - truth.p0))
    result.bias_y = float(np.mean((y1 - y0).mean(axis=1)) - np.mean(truth.y1 - truth.y0))
    summary = summarize(draws, data)
    result.ari = adjusted_rand_index(summary.point_partition, truth.stratum)
    result.strata_count = int(np.unique(summary.point_partition).size)
    result.tau_hat = np.array([row.median for row in summary.tau_summary])
    result.gap_hat = np.array([row.median for row in summary.gap_summary])
    return result


def _run_replicate_args(args):
    return run_replicate(*args)


def _iqr(values):
    q1, q3 = np.quantile(values, [0.25, 0.75])
    return float(q3 - q1)


def _sd(values):
    return float(np.std(values, ddof=1)) if len(values) > 1 else math.nan


@dataclass
class StudyResult:
    spec: ScenarioSpec
    replicates: list

    @property
    def ok(self):
        return [r for r in self.replicates if not r.failed]

    @property
    def failures(self):
        return sum(r.failed for r in self.replicates)

    def table1(self):
        bp = np.array([r.bias_p for r in self.ok])
        by = np.array([r.bias_y for r in self.ok])
        rows = []
        for name, vals in (("E[P(1)-P(0)]", bp), ("E[Y(1)-Y(0)]", by)):
            rows.append({
                "quantity": name,
                "median": float(np.median(vals)) if vals.size else math.nan,
                "iqr": _iqr(vals) if vals.size else math.nan,
                "replicates": int(vals.size),
                "failures": self.failures,
            })
        return rows

    def table2(self):
        ari = np.array([r.ari for r in self.ok])
        return [{
            "mean": float(ari.mean()) if ari.size else math.nan,
            "sd": _sd(ari),
            "replicates": int(ari.size),
            "failures": self.failures,
        }]

    def table3(self):
        truth = population_tau(self.spec)
        rows = []
        for j, s in enumerate(STRATA):
            est = np.array([r.tau_hat[j] for r in self.ok])
            est = est[~np.isnan(est)]
            rows.append({
                "stratum": s.short,
                "true": float(truth[j]),
                "mean": float(est.mean()) if est.size else math.nan,
                "sd": _sd(est),
                "present": int(est.size),
                "replicates": len(self.ok),
                "failures": self.failures,
            })
        return rows

    def replicate_rows(self):
        rows = []
        for r in self.replicates:
            row = {"replicate": r.index, "failed": int(r.failed), "bias_p": r.bias_p,
                   "bias_y": r.bias_y, "ari": r.ari, "strata_count": r.strata_count}
            for j, s in enumerate(STRATA):
                row[f"tau_{s.short}"] = r.tau_hat[j]
                row[f"true_tau_{s.short}"] = r.tau_true[j]
                row[f"gap_{s.short}"] = r.gap_hat[j]
            rows.append(row)
        return rows


def replicate_study(spec: ScenarioSpec, n_replicates=20, config: GibbsConfig | None = None,
                    hp: Hyperparams | None = None, jobs=1, master_seed=None):
    """Fit ``n_replicates`` independently generated datasets.

    Replicate seeds are spawned from ``master_seed`` (default: the config
    seed), so results do not depend on ``jobs``. Failed chains are kept in the
    result with ``failed=True`` and excluded from the tables.
    """
    if n_replicates < 1:
        raise InputError("n_replicates must be >= 1")
    config = config or GibbsConfig()
    hp = hp or Hyperparams()
    master = config.seed if master_seed is None else master_seed
    seeds = _replicate_seeds(master, n_replicates)
    tasks = [(spec, hp, config, i, ds, cs) for i, (ds, cs) in enumerate(seeds)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_replicate_args, tasks))
    else:
        results = [_run_replicate_args(task) for task in tasks]
    study = StudyResult(spec, sorted(results, key=lambda r: r.index))
    if study.failures:
        warnings.warn(f"{study.failures} of {n_replicates} replicate chains failed", RuntimeWarning)
    return study
