"""CSV, config-file and draw-directory persistence."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import InputError
from .gibbs import GibbsConfig, PosteriorDraws
from .model import Hyperparams, ObservedDataset

__all__ = [
    "fmt",
    "write_csv",
    "read_csv",
    "RunConfig",
    "parse_config",
    "read_observed",
    "write_observed",
    "write_draws",
    "read_draws",
]

FLOAT_FMT = "%.10g"
SEED_ENV = "CASBAH_SEED"


def fmt(value):
    """Text form used in every emitted CSV: ints verbatim, floats at %.10g, NaN/None empty."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "" if math.isnan(value) else FLOAT_FMT % value
    return str(value)


def write_csv(path, header, rows):
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def _write_columns(path, header, columns, formats):
    """Fast path for large numeric tables: one format string per column."""
    n = len(columns[0]) if columns else 0
    line = ",".join(formats) + "\n"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        if n:
            table = np.rec.fromarrays(columns)
            fh.writelines(line % tuple(r) for r in table.tolist())


def read_csv(path):
    """Return (header, rows) with every cell as a string."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"file not found: {path}")
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    for i, r in enumerate(rows, start=1):
        if len(r) != len(header):
            raise InputError(f"{path}: row {i} has {len(r)} fields, expected {len(header)}")
    return header, rows


def _column(path, header, rows, name, kind=float):
    if name not in header:
        raise InputError(f"{path}: missing column '{name}'")
    j = header.index(name)
    out = []
    for i, r in enumerate(rows, start=1):
        text = r[j].strip()
        try:
            out.append(math.nan if text == "" and kind is float else kind(text))
        except ValueError:
            raise InputError(f"{path}: row {i}, column '{name}': not a number: {text!r}") from None
    return np.array(out, dtype=kind)


# -- config -----------------------------------------------------------------------

_BOOL = {"1": True, "true": True, "yes": True, "0": False, "false": False, "no": False}


@dataclass
class RunConfig:
    hyper: Hyperparams = field(default_factory=Hyperparams)
    gibbs: GibbsConfig = field(default_factory=GibbsConfig)
    covariates: tuple = ()
    standardize: bool = False

    def echo(self):
        out = {name: getattr(self.hyper, name) for name in Hyperparams.field_names()}
        out.update({name: getattr(self.gibbs, name) for name in GibbsConfig.field_names()})
        out["covariates"] = ",".join(self.covariates)
        out["standardize"] = self.standardize
        return out


def parse_config(path=None, overrides=None):
    """Read a flat ``key = value`` file (``#`` starts a comment).

    Keys are Hyperparams / GibbsConfig field names plus ``covariates``
    (comma-separated column names) and ``standardize``. The environment
    variable CASBAH_SEED, when set, replaces the seed.
    """
    values = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise InputError(f"config file not found: {path}")
        for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value
    values.update(overrides or {})
    if os.environ.get(SEED_ENV):
        values["seed"] = os.environ[SEED_ENV]

    hyper_kw, gibbs_kw = {}, {}
    covariates, standardize = (), False
    for key, value in values.items():
        try:
            if key in Hyperparams.field_names():
                hyper_kw[key] = int(value) if key == "L" else float(value)
            elif key in GibbsConfig.field_names():
                gibbs_kw[key] = int(value)
            elif key == "covariates":
                covariates = tuple(c.strip() for c in str(value).split(",") if c.strip())
            elif key == "standardize":
                standardize = value if isinstance(value, bool) else _BOOL[str(value).lower()]
            else:
                raise InputError(f"unknown config key '{key}'")
        except (ValueError, KeyError):
            raise InputError(f"config key '{key}': invalid value {value!r}") from None
    return RunConfig(Hyperparams(**hyper_kw), GibbsConfig(**gibbs_kw), covariates, standardize)


# -- observed data --------------------------------------------------------------------

def read_observed(path, covariates=(), standardize=False):
    """Load ``id, t, p, y, <covariates>``; covariates default to the x1..xp columns."""
    header, rows = read_csv(path)
    if not covariates:
        covariates = [h for h in header if h.startswith("x") and h[1:].isdigit()]
        covariates.sort(key=lambda h: int(h[1:]))
    t = _column(path, header, rows, "t")
    for i, v in enumerate(t, start=1):
        if v not in (0.0, 1.0):
            raise InputError(f"{path}: row {i}, column 't': treatment must be 0 or 1, got {v:g}")
    p = _column(path, header, rows, "p")
    y = _column(path, header, rows, "y")
    x = (np.column_stack([_column(path, header, rows, c) for c in covariates])
         if covariates else np.zeros((len(rows), 0)))
    for name, arr in [("p", p), ("y", y)] + [(c, x[:, j]) for j, c in enumerate(covariates)]:
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            raise InputError(f"{path}: row {bad[0] + 1}, column '{name}': missing or non-finite value")
    if standardize and x.size:
        sd = x.std(axis=0)
        x = (x - x.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    ids = (_column(path, header, rows, "id", kind=int) if "id" in header
           else np.arange(1, len(rows) + 1))
    return ObservedDataset(x=x.reshape(len(rows), len(covariates)), t=t.astype(np.int64),
                           p_obs=p, y_obs=y), ids, list(covariates)


def write_observed(path, data: ObservedDataset, ids=None, covariates=None):
    ids = np.arange(1, data.n + 1) if ids is None else np.asarray(ids)
    covariates = covariates or [f"x{j + 1}" for j in range(data.p)]
    header = ["id", "t", "p", "y"] + list(covariates)
    cols = [ids.astype(np.int64), data.t, data.p_obs, data.y_obs] + [data.x[:, j] for j in range(data.p)]
    _write_columns(path, header, cols, ["%d", "%d"] + [FLOAT_FMT] * (2 + data.p))


# -- draws ----------------------------------------------------------------------------

def write_draws(out_dir, draws: PosteriorDraws):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    K, L = draws.eta.shape
    n = draws.s0.shape[1]
    it = draws.iteration
    f = FLOAT_FMT

    _write_columns(out / "atoms.csv", ["iter", "l", "eta", "sigma2"],
                   [np.repeat(it, L), np.tile(np.arange(1, L + 1), K),
                    draws.eta.ravel(), draws.sigma2.ravel()], ["%d", "%d", f, f])
    _write_columns(out / "theta.csv",
                   ["iter", "theta00", "theta01", "theta10", "theta11", "theta12", "theta13"],
                   [it] + [draws.theta0[:, j] for j in range(2)] + [draws.theta1[:, j] for j in range(4)],
                   ["%d"] + [f] * 6)
    _write_columns(out / "lambda.csv", ["iter", "lambda0", "lambda1"],
                   [it, draws.lambda0, draws.lambda1], ["%d", f, f])
    units = np.tile(np.arange(1, n + 1), K)
    iters = np.repeat(it, n)
    _write_columns(out / "labels.csv", ["iter", "unit", "s0", "s1", "stratum"],
                   [iters, units, draws.s0.ravel(), draws.s1.ravel(), draws.stratum.ravel()],
                   ["%d"] * 5)
    _write_columns(out / "imputed.csv", ["iter", "unit", "p_miss", "y_miss"],
                   [iters, units, draws.p_missing.ravel(), draws.y_missing.ravel()],
                   ["%d", "%d", f, f])
    d, k = draws.beta0.shape[1:]
    beta = np.stack([draws.beta0, draws.beta1], axis=1)  # K x 2 x d x k
    _write_columns(out / "beta.csv", ["iter", "arm", "coef", "stick", "value"],
                   [np.repeat(it, 2 * d * k), np.tile(np.repeat([0, 1], d * k), K),
                    np.tile(np.repeat(np.arange(d), k), 2 * K), np.tile(np.arange(1, k + 1), 2 * d * K),
                    beta.ravel()], ["%d"] * 4 + [f])


def _table(path):
    header, rows = read_csv(path)
    if not rows:
        raise InputError(f"{path}: no draws")
    try:
        arr = np.array([[float(v) for v in r] for r in rows])
    except ValueError:
        raise InputError(f"{path}: non-numeric entry") from None
    return header, arr


def read_draws(draw_dir):
    """Rebuild PosteriorDraws from a directory written by :func:`write_draws`."""
    d = Path(draw_dir)
    if not d.is_dir():
        raise InputError(f"draws directory not found: {d}")
    _, atoms = _table(d / "atoms.csv")
    iters = np.unique(atoms[:, 0]).astype(np.int64)
    K = iters.size
    L = int(atoms[:, 1].max())
    _, theta = _table(d / "theta.csv")
    _, lam = _table(d / "lambda.csv")
    _, labels = _table(d / "labels.csv")
    _, imputed = _table(d / "imputed.csv")
    _, beta = _table(d / "beta.csv")
    n = int(labels[:, 1].max())
    if labels.shape[0] != K * n or imputed.shape[0] != K * n or theta.shape[0] != K:
        raise InputError(f"{d}: draw files disagree on the number of iterations or units")
    dd = int(beta[:, 2].max()) + 1
    return PosteriorDraws(
        eta=atoms[:, 2].reshape(K, L), sigma2=atoms[:, 3].reshape(K, L),
        beta0=beta[beta[:, 1] == 0, 4].reshape(K, dd, L - 1),
        beta1=beta[beta[:, 1] == 1, 4].reshape(K, dd, L - 1),
        s0=labels[:, 2].astype(np.int64).reshape(K, n), s1=labels[:, 3].astype(np.int64).reshape(K, n),
        p_missing=imputed[:, 2].reshape(K, n), y_missing=imputed[:, 3].reshape(K, n),
        theta0=theta[:, 1:3], theta1=theta[:, 3:7],
        lambda0=lam[:, 1], lambda1=lam[:, 2],
        stratum=labels[:, 4].astype(np.int64).reshape(K, n), iteration=iters,
    )
