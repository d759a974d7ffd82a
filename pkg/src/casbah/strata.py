"""Principal strata and principal causal effects from posterior draws."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError

__all__ = [
    "StratumLabel",
    "StrataSummary",
    "IntervalSummary",
    "assign_stratum",
    "assign_strata",
    "per_unit_probs",
    "point_partition",
    "compute_pce",
    "expected_post_treatment_gap",
    "summarize_draws",
    "summarize",
    "adjusted_rand_index",
]

CREDIBLE_LEVEL = 0.90


class StratumLabel(enum.IntEnum):
    NEGATIVE = -1
    DISSOCIATIVE = 0
    POSITIVE = 1

    @property
    def short(self):
        return {-1: "negative", 0: "dissociative", 1: "positive"}[int(self)]

    @classmethod
    def parse(cls, text):
        text = str(text).strip().lower()
        for label in cls:
            if text in (label.short, label.name.lower(), str(int(label))):
                return label
        raise InputError(f"unknown stratum label {text!r}")


# column order used for every per-stratum array: (negative, dissociative, positive)
STRATA = (StratumLabel.NEGATIVE, StratumLabel.DISSOCIATIVE, StratumLabel.POSITIVE)


def assign_strata(eta, s0, s1):
    """Vectorized stratum codes (-1/0/+1) from 1-based labels and atom locations."""
    eta = np.asarray(eta, float)
    s0 = np.asarray(s0)
    s1 = np.asarray(s1)
    gap = eta[s1 - 1] - eta[s0 - 1]
    return np.where(s0 == s1, 0, np.sign(gap)).astype(np.int64)


def assign_stratum(state, unit):
    return StratumLabel(int(assign_strata(state.eta, state.s0[unit:unit + 1], state.s1[unit:unit + 1])[0]))


def per_unit_probs(stratum_draws):
    """Empirical (negative, dissociative, positive) frequencies per unit; shape (n, 3)."""
    codes = np.asarray(stratum_draws)
    if codes.ndim != 2 or codes.shape[0] == 0:
        raise InputError("need a non-empty (iterations, units) array of stratum codes")
    return np.stack([(codes == s).mean(axis=0) for s in STRATA], axis=1)


def point_partition(probs):
    """Per-unit posterior mode; ties go to dissociative, then negative."""
    probs = np.atleast_2d(np.asarray(probs, float))
    if probs.shape[1] != 3:
        raise InputError("expected three columns (negative, dissociative, positive)")
    # preference order among tied maxima: dissociative, negative, positive
    order = (1, 0, 2)
    best = probs.max(axis=1)
    out = np.empty(probs.shape[0], dtype=np.int64)
    chosen = np.zeros(probs.shape[0], dtype=bool)
    for col in order:
        take = ~chosen & (probs[:, col] == best)
        out[take] = int(STRATA[col])
        chosen |= take
    return out


def _stratum_means(values, codes):
    """Per-iteration mean of ``values`` within each stratum; NaN where empty. Shape (K, 3)."""
    out = np.full((values.shape[0], 3), np.nan)
    for j, s in enumerate(STRATA):
        member = codes == s
        count = member.sum(axis=1)
        total = np.where(member, values, 0.0).sum(axis=1)
        present = count > 0
        out[present, j] = total[present] / count[present]
    return out


def compute_pce(draws, data):
    """Per-iteration principal causal effects (tau-, tau0, tau+); NaN for empty strata."""
    _, _, y0, y1 = draws.potential_outcomes(data)
    return _stratum_means(y1 - y0, draws.stratum)


def expected_post_treatment_gap(draws, data):
    """Per-iteration mean of P(1) - P(0) within each stratum; NaN for empty strata."""
    p0, p1, _, _ = draws.potential_outcomes(data)
    return _stratum_means(p1 - p0, draws.stratum)


@dataclass(frozen=True)
class IntervalSummary:
    stratum: StratumLabel
    median: float
    lo: float
    hi: float
    presence: float

    @property
    def present(self):
        return self.presence > 0


def summarize_draws(per_iteration, level=CREDIBLE_LEVEL):
    """Median and equal-tailed interval per stratum over the iterations where it is present."""
    per_iteration = np.asarray(per_iteration, float)
    tail = (1.0 - level) / 2.0
    rows = []
    for j, s in enumerate(STRATA):
        col = per_iteration[:, j]
        col = col[~np.isnan(col)]
        presence = col.size / per_iteration.shape[0] if per_iteration.shape[0] else 0.0
        if col.size:
            lo, med, hi = np.quantile(col, [tail, 0.5, 1.0 - tail])
        else:
            lo = med = hi = math.nan
        rows.append(IntervalSummary(s, float(med), float(lo), float(hi), presence))
    return rows


@dataclass
class StrataSummary:
    per_unit_probs: np.ndarray
    point_partition: np.ndarray
    tau_draws: np.ndarray
    tau_summary: list
    gap_draws: np.ndarray
    gap_summary: list
    strata_counts: dict

    def tau(self, stratum):
        """Posterior median of the principal effect for ``stratum`` (NaN when absent)."""
        return self.tau_summary[STRATA.index(StratumLabel(stratum))].median


def summarize(draws, data, level=CREDIBLE_LEVEL):
    probs = per_unit_probs(draws.stratum)
    partition = point_partition(probs)
    tau = compute_pce(draws, data)
    gap = expected_post_treatment_gap(draws, data)
    counts = {s: int(np.sum(partition == s)) for s in STRATA}
    return StrataSummary(
        per_unit_probs=probs,
        point_partition=partition,
        tau_draws=tau,
        tau_summary=summarize_draws(tau, level),
        gap_draws=gap,
        gap_summary=summarize_draws(gap, level),
        strata_counts=counts,
    )


def _comb2(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1.0) / 2.0


def adjusted_rand_index(partition_a, partition_b):
    """Hubert-Arabie adjusted Rand index between two labelings of the same units."""
    a = np.asarray(partition_a)
    b = np.asarray(partition_b)
    if a.shape != b.shape or a.ndim != 1:
        raise InputError(f"partitions must be 1-d and of equal length, got {a.shape} and {b.shape}")
    n = a.size
    if n < 2:
        raise InputError("adjusted Rand index needs at least two units")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1)
    index = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    expected = sum_a * sum_b / _comb2(n)
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # both partitions trivial (one block, or all singletons)
        return 1.0
    return float((index - expected) / (max_index - expected))
