"""Config-driven Monte Carlo experiments and the assumption battery.

Every replication ``(i, rep)`` draws from its own stream
``SeedSequence(seed, spawn_key=(i, rep))``, so rows do not depend on the
order or process in which replications run.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import dgp, population, qmle, reweight
from .dgp import CovariateModel, DgpSpec, ErrorModel, ModelParams, ScaleFunction
from .links import get_link

SCHEMA = "slopeqmle.report/1"
MODES = ("consistency", "pseudo-true", "coverage", "reweight-compare")
FAILURE_BUDGET = 0.05
WORKERS_ENV = "SLOPEQMLE_WORKERS"


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class HarnessError(RuntimeError):
    """An experiment could not be completed (e.g. failure budget exceeded)."""


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    dgp: DgpSpec
    link: str
    sample_sizes: tuple
    replications: int
    seed: int
    mode: str = "consistency"
    outputs: dict = field(default_factory=dict)
    node_count: int = population.DEFAULT_NODES
    level: float = 0.95
    ratio: tuple = (0, 1)
    trim_quantile: float = 0.01

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        sizes = tuple(int(n) for n in self.sample_sizes)
        if not sizes or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigError("sample_sizes must be non-empty and strictly increasing")
        object.__setattr__(self, "sample_sizes", sizes)
        try:
            get_link(self.link)
        except KeyError as exc:
            raise ConfigError(str(exc)) from None

    def echo(self) -> dict:
        return {
            "mode": self.mode,
            "link": self.link,
            "sample_sizes": list(self.sample_sizes),
            "replications": self.replications,
            "seed": self.seed,
            "node_count": self.node_count,
            "level": self.level,
            "ratio": list(self.ratio),
            "trim_quantile": self.trim_quantile,
            "dgp": dgp.dump_spec(self.dgp),
        }

    @classmethod
    def from_parser(cls, cp: configparser.ConfigParser) -> "ExperimentConfig":
        try:
            e = cp["experiment"]
            spec = dgp.read_config(cp)
            return cls(
                dgp=spec,
                link=e.get("link", "logistic"),
                sample_sizes=tuple(int(s) for s in e["sample_sizes"].split(",")),
                replications=int(e["replications"]),
                seed=int(e["seed"]),
                mode=e.get("mode", "consistency"),
                outputs=dict(cp["outputs"]) if cp.has_section("outputs") else {},
                node_count=int(e.get("node_count", population.DEFAULT_NODES)),
                level=float(e.get("level", 0.95)),
                ratio=tuple(int(s) for s in e.get("ratio", "0, 1").split(",")),
                trim_quantile=float(e.get("trim_quantile", 0.01)),
            )
        except KeyError as exc:
            raise ConfigError(f"missing config entry {exc}") from None
        except dgp.SpecError as exc:
            raise ConfigError(str(exc)) from None
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed config value: {exc}") from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        if not cp.read(path):
            raise ConfigError(f"cannot read config {path}")
        return cls.from_parser(cp)

    def to_parser(self) -> configparser.ConfigParser:
        cp = dgp.write_config(self.dgp)
        cp["experiment"] = {
            "mode": self.mode,
            "link": self.link,
            "sample_sizes": ", ".join(map(str, self.sample_sizes)),
            "replications": str(self.replications),
            "seed": str(self.seed),
            "node_count": str(self.node_count),
            "level": repr(self.level),
            "ratio": ", ".join(map(str, self.ratio)),
            "trim_quantile": repr(self.trim_quantile),
        }
        if self.outputs:
            cp["outputs"] = dict(self.outputs)
        return cp


@dataclass(frozen=True, eq=False)
class ExperimentReport:
    config: ExperimentConfig
    columns: tuple
    rows: list
    summary_columns: tuple
    summary: list
    reference: Optional[dict]


# --------------------------------------------------------------------- #
# Replications
# --------------------------------------------------------------------- #


def _columns(cfg: ExperimentConfig) -> tuple:
    m = cfg.dgp.m
    cols = ["n", "rep", "status", "alpha_hat"] + [f"beta_hat_{j + 1}" for j in range(m)]
    cols += ["cosine", "c_hat_ls"] + [f"c_hat_{j + 1}" for j in range(m)]
    if cfg.mode == "coverage":
        cols += ["ratio_hat", "ratio_lo", "ratio_hi", "covered"]
    if cfg.mode == "reweight-compare":
        cols += ["alpha_w"] + [f"beta_w_{j + 1}" for j in range(m)] + ["cosine_w", "weighted_better"]
    return tuple(cols)


def _direction_stats(beta: np.ndarray, beta0: np.ndarray) -> dict:
    out = {"cosine": float(beta @ beta0 / (np.linalg.norm(beta) * np.linalg.norm(beta0)))}
    out["c_hat_ls"] = float(beta @ beta0 / (beta0 @ beta0))
    for j, (b, b0) in enumerate(zip(beta, beta0)):
        out[f"c_hat_{j + 1}"] = float(b / b0) if b0 != 0 else math.nan
    return out


def _replicate(args) -> dict:
    cfg, i, rep = args
    n = cfg.sample_sizes[i]
    link = get_link(cfg.link)
    beta0 = cfg.dgp.theta0.beta
    row = {c: math.nan for c in _columns(cfg)}
    row.update(n=n, rep=rep, status="ok")
    data = dgp.sample(cfg.dgp, n, np.random.SeedSequence(cfg.seed, spawn_key=(i, rep)))
    try:
        res = qmle.fit(data, link)
        if not res.converged:
            row["status"] = "not-converged"
            return row
    except (qmle.SeparationError, qmle.CollinearityError) as exc:
        row["status"] = "separation" if isinstance(exc, qmle.SeparationError) else "collinear"
        return row
    th = res.theta_hat
    row["alpha_hat"] = th.alpha
    for j, b in enumerate(th.beta):
        row[f"beta_hat_{j + 1}"] = float(b)
    row.update(_direction_stats(th.beta, beta0))
    if cfg.mode == "coverage":
        j, k = cfg.ratio
        est, lo, hi = qmle.ratio_confint(res, j, k, cfg.level)
        truth = beta0[j] / beta0[k]
        row.update(ratio_hat=est, ratio_lo=lo, ratio_hi=hi, covered=int(lo <= truth <= hi))
    if cfg.mode == "reweight-compare":
        try:
            plan = reweight.compute_weights(data, trim_quantile=cfg.trim_quantile)
            wres = reweight.fit_weighted(data, link, plan)
        except (reweight.WeightingError, qmle.EstimationError):
            row["status"] = "weighting-failed"
            return row
        row["alpha_w"] = wres.theta_hat.alpha
        for j, b in enumerate(wres.theta_hat.beta):
            row[f"beta_w_{j + 1}"] = float(b)
        cw = _direction_stats(wres.theta_hat.beta, beta0)["cosine"]
        row.update(cosine_w=cw, weighted_better=int(cw > row["cosine"]))
    return row


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run(cfg: ExperimentConfig, workers: Optional[int] = None) -> ExperimentReport:
    """Run every ``(n, replication)`` pair and summarise.

    Replications that fail (separation, non-convergence) are kept as rows
    with a status; more than 5% failures at any sample size aborts.
    """
    workers = _workers() if workers is None else workers
    reference = None
    try:
        pt = population.pseudo_true_for(cfg.dgp, get_link(cfg.link), cfg.node_count)
        reference = {
            "c_star": pt.c_star,
            "r_star": pt.r_star,
            "theta_star": pt.theta_star.as_vector().tolist(),
            "residual_full_foc": pt.residual_full_foc,
        }
    except (dgp.UnsupportedAnalysis, population.PopulationError):
        reference = None

    tasks = [(cfg, i, rep) for i in range(len(cfg.sample_sizes)) for rep in range(cfg.replications)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_replicate, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        rows = [_replicate(t) for t in tasks]

    for n in cfg.sample_sizes:
        bad = [r for r in rows if r["n"] == n and r["status"] != "ok"]
        if len(bad) > FAILURE_BUDGET * cfg.replications:
            statuses = sorted({r["status"] for r in bad})
            raise HarnessError(
                f"{len(bad)} of {cfg.replications} replications failed at n={n} ({', '.join(statuses)}); "
                f"budget is {FAILURE_BUDGET:.0%}"
            )
    summary_cols, summary = summarize(cfg, rows, reference)
    return ExperimentReport(cfg, _columns(cfg), rows, summary_cols, summary, reference)


def summarize(cfg: ExperimentConfig, rows: list, reference: Optional[dict]):
    """Per-sample-size summary rows recomputable from ``rows``."""
    m = cfg.dgp.m
    target = np.asarray(reference["theta_star"]) if reference else cfg.dgp.theta0.as_vector()
    cols = ["n", "ok", "failed", "bias_max", "rmse", "cosine_median", "c_hat_mean", "c_hat_mcse"]
    if reference:
        cols += ["c_star", "c_hat_z"]
    if cfg.mode == "coverage":
        cols += ["coverage"]
    if cfg.mode == "reweight-compare":
        cols += ["cosine_w_median", "weighted_better_rate"]
    out = []
    for n in cfg.sample_sizes:
        ok = [r for r in rows if r["n"] == n and r["status"] == "ok"]
        est = np.array([[r["alpha_hat"]] + [r[f"beta_hat_{j + 1}"] for j in range(m)] for r in ok]).reshape(len(ok), m + 1)
        err = est - target
        c_hat = np.array([r["c_hat_ls"] for r in ok])
        s = {
            "n": n,
            "ok": len(ok),
            "failed": cfg.replications - len(ok),
            "bias_max": float(np.max(np.abs(err.mean(axis=0)))) if ok else math.nan,
            "rmse": float(np.sqrt(np.mean(np.sum(err**2, axis=1)))) if ok else math.nan,
            "cosine_median": float(np.median([r["cosine"] for r in ok])) if ok else math.nan,
            "c_hat_mean": float(c_hat.mean()) if ok else math.nan,
            "c_hat_mcse": float(c_hat.std(ddof=1) / math.sqrt(len(ok))) if len(ok) > 1 else math.nan,
        }
        if reference:
            s["c_star"] = reference["c_star"]
            s["c_hat_z"] = (s["c_hat_mean"] - s["c_star"]) / s["c_hat_mcse"] if s["c_hat_mcse"] > 0 else math.nan
        if cfg.mode == "coverage":
            s["coverage"] = float(np.mean([r["covered"] for r in ok])) if ok else math.nan
        if cfg.mode == "reweight-compare":
            s["cosine_w_median"] = float(np.median([r["cosine_w"] for r in ok])) if ok else math.nan
            s["weighted_better_rate"] = float(np.mean([r["weighted_better"] for r in ok])) if ok else math.nan
        out.append(s)
    return tuple(cols), out


# --------------------------------------------------------------------- #
# Output
# --------------------------------------------------------------------- #


def _cell(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def _table(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r[c]) for c in columns])
    return buf.getvalue()


def to_json(report: ExperimentReport) -> str:
    doc = {
        "schema": SCHEMA,
        "config": report.config.echo(),
        "reference": report.reference,
        "columns": list(report.columns),
        "summary": report.summary,
        "rows": report.rows,
    }
    return json.dumps(_json_safe(doc), indent=2) + "\n"


def emit(report: ExperimentReport, fmt: str, path) -> list:
    """Write the report; returns the paths written.

    ``csv`` writes ``<path>`` (rows), ``<stem>.summary.csv`` and
    ``<stem>.config.ini`` (the config echo); ``json`` writes one document
    with schema tag ``slopeqmle.report/1``.
    """
    path = Path(path)
    try:
        if fmt == "json":
            path.write_text(to_json(report))
            return [path]
        if fmt == "csv":
            summary_path = path.with_name(path.stem + ".summary.csv")
            config_path = path.with_name(path.stem + ".config.ini")
            path.write_text(_table(report.columns, report.rows))
            summary_path.write_text(_table(report.summary_columns, report.summary))
            buf = io.StringIO()
            report.config.to_parser().write(buf)
            config_path.write_text(buf.getvalue())
            return [path, summary_path, config_path]
    except OSError as exc:
        raise HarnessError(f"cannot write report to {path}: {exc}") from None
    raise ValueError(f"unknown format {fmt!r}")


def read_summary_csv(path) -> list:
    """Parse a summary CSV written by :func:`emit` back into dicts of numbers."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        parsed = {}
        for k, v in r.items():
            if v == "":
                parsed[k] = math.nan
            elif k in ("n", "ok", "failed"):
                parsed[k] = int(v)
            else:
                parsed[k] = float(v)
        out.append(parsed)
    return out


# --------------------------------------------------------------------- #
# Assumption battery
# --------------------------------------------------------------------- #

SKEWED_MIXTURE = dict(
    weights=[0.7, 0.3],
    means=[[-0.6, -0.3], [1.4, 0.7]],
    covs=[[[0.5, 0.2], [0.2, 0.6]], [[0.3, -0.1], [-0.1, 1.2]]],
)


def skewed_mixture_covariates() -> CovariateModel:
    """Two-component Gaussian mixture in the plane with a long right tail along (2, 1).

    ``E(X | V)`` is visibly nonlinear for ``beta0 = (1, 1)``.
    """
    return CovariateModel.normal_mixture(**SKEWED_MIXTURE)


@dataclass(frozen=True, eq=False)
class BatteryCase:
    name: str
    spec: DgpSpec
    link: str
    guaranteed: bool
    theorem: str
    expected: str


def assumption_battery() -> list:
    """Documented data generating processes with their expected outcome.

    Cases ``i*`` and ``ii`` satisfy index dependence and linearity in
    expectation, so slope consistency is guaranteed.  ``iii`` (skewed
    covariates) and ``iv`` (heteroskedasticity driven by a covariate
    direction other than the index) carry no guarantee and are reported
    only.
    """
    eye = np.eye(2)
    theta = ModelParams(0.5, [1.0, -1.0])
    het = ScaleFunction("quadratic", (1.0, 1.0))
    return [
        BatteryCase(
            "i-normal-logistic",
            DgpSpec(CovariateModel.normal([0, 0], eye), ErrorModel(), theta, label="i-normal-logistic"),
            "probit", True, "slope consistency (independent errors, elliptical X)", "consistent",
        ),
        BatteryCase(
            "i-t5-gumbel",
            DgpSpec(
                CovariateModel.student_t([0.5, -0.5], [[1.0, 0.3], [0.3, 2.0]], 5.0),
                ErrorModel(base="gumbel"),
                ModelParams(-0.25, [0.8, 0.4]),
                label="i-t5-gumbel",
            ),
            "logistic", True, "slope consistency (independent asymmetric errors, elliptical X)", "consistent",
        ),
        BatteryCase(
            "i-normal-t3",
            DgpSpec(
                CovariateModel.normal([1.0, 0.0, -1.0], [[1.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 1.5]]),
                ErrorModel(base="t", base_dof=3.0),
                ModelParams(0.0, [1.0, 0.0, 2.0]),
                label="i-normal-t3",
            ),
            "logistic", True, "slope consistency (independent heavy-tailed errors, elliptical X)", "consistent",
        ),
        BatteryCase(
            "ii-normal-indexhet",
            DgpSpec(
                CovariateModel.normal([0, 0], eye),
                ErrorModel("index-heteroskedastic", scale_fn=het),
                theta,
                label="ii-normal-indexhet",
            ),
            "probit", True, "slope consistency (index-dependent errors, elliptical X)", "consistent",
        ),
        BatteryCase(
            "iii-mixture-logistic",
            DgpSpec(skewed_mixture_covariates(), ErrorModel(), ModelParams(0.0, [1.0, 1.0]), label="iii-mixture-logistic"),
            "probit", False, "none (linearity in expectation fails)", "report only",
        ),
        BatteryCase(
            "iv-normal-covhet",
            DgpSpec(
                CovariateModel.normal([0, 0], eye),
                ErrorModel("covariate-heteroskedastic", scale_fn=ScaleFunction("exp", (0.75,)), direction=[1.0, 1.0]),
                theta,
                label="iv-normal-covhet",
            ),
            "probit", False, "none (index dependence fails)", "report only",
        ),
    ]


def battery_report(node_count: int = population.DEFAULT_NODES, n: int = 0, seed: int = 0) -> list:
    """Evaluate the sign structure and pseudo-true solution for every battery case.

    With ``n > 0`` each case is also fitted once on a simulated sample and
    the direction cosine of the slope estimate is reported.
    """
    out = []
    for k, case in enumerate(assumption_battery()):
        link = get_link(case.link)
        law = dgp.index_distribution(case.spec)
        grid = population.make_grid(law, node_count)
        pi = dgp.pi_function(case.spec)
        entry = {
            "name": case.name,
            "link": case.link,
            "flags": sorted(case.spec.assumption_flags),
            "guaranteed": case.guaranteed,
            "theorem": case.theorem,
            "expected": case.expected,
        }
        r0 = population.solve_r_given_c(0.0, pi, law, link, grid)
        entry["psi_at_zero"] = float(population.psi(0.0, r0, pi, law, link, grid))
        try:
            pt = population.pseudo_true_for(case.spec, link, node_count)
            entry.update(c_star=pt.c_star, r_star=pt.r_star, residual_full_foc=pt.residual_full_foc, solved=True)
        except population.PopulationError as exc:
            entry.update(solved=False, error=str(exc))
        if n > 0:
            data = dgp.sample(case.spec, n, np.random.SeedSequence(seed, spawn_key=(k,)))
            res = qmle.fit(data, link)
            entry["cosine"] = _direction_stats(res.theta_hat.beta, case.spec.theta0.beta)["cosine"]
        out.append(entry)
    return out
