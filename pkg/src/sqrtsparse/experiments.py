"""Synthetic-data Monte Carlo harness for rate and adaptivity checks.

Grid execution is deterministic: every (cell, replicate) derives its own
RNG stream from the root seed and the cell coordinates, so results do not
depend on scheduling or worker count. Coefficient magnitudes are
proportional to sigma, which makes cells differing only in sigma exact
rescalings of each other (the estimators are scale-equivariant, so paired
errors scale exactly).
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .adaptivity import AdaptationConfig, WeightFunction, lepski_aggregate, sqrt_lasso_level_fitter
from .model import (
    DataValidationError,
    DesignMatrix,
    GroundTruth,
    RegressionData,
    empirical_norm,
    normalize_columns,
)
from .penalties import sorted_l1_norm, sqrt_lasso_lambda, sqrt_slope_lambdas
from .solvers import SolverConfig, fit_sqrt_lasso, fit_sqrt_slope

FORMAT_VERSION = 1
CSV_HEADER = ["n", "p", "s", "sigma", "method", "metric", "median", "iqr", "normalized_ratio", "failures"]

METHODS = ("sqrt-lasso", "sqrt-slope", "lepski-lasso")
DESIGN_KINDS = ("gaussian-iid", "gaussian-equicorrelated")
BETA_PATTERNS = ("first-s-ones", "random-support-unit")

# seed-stream tags
_TAG_DESIGN = 1
_TAG_NOISE = 2
_TAG_SUPPORT = 3
_TAG_CALIBRATION = 9

GRID_SOLVER_CONFIG = SolverConfig(max_outer_iters=60, objective_tol=1e-7, kkt_tol=1e-6)


@dataclass(frozen=True)
class ExperimentSpec:
    n_values: tuple
    p_values: tuple
    s_values: tuple
    sigma_values: tuple
    gamma_values: tuple
    method: str
    replicates: int
    seed: int
    design_kind: str = "gaussian-iid"
    rho: float = 0.0
    beta_pattern: str = "first-s-ones"
    q_list: tuple = (1.0, 2.0)
    s_star: int | None = None
    c0: float | None = None

    def __post_init__(self):
        for name in ("n_values", "p_values", "s_values", "sigma_values", "gamma_values", "q_list"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.method not in METHODS:
            raise DataValidationError(f"method must be one of {METHODS}")
        if self.design_kind not in DESIGN_KINDS:
            raise DataValidationError(f"design_kind must be one of {DESIGN_KINDS}")
        if self.beta_pattern not in BETA_PATTERNS:
            raise DataValidationError(f"beta_pattern must be one of {BETA_PATTERNS}")
        if self.replicates < 1:
            raise DataValidationError("replicates must be >= 1")
        if not 0.0 <= self.rho < 1.0:
            raise DataValidationError("rho must lie in [0, 1)")
        for s in self.s_values:
            for p in self.p_values:
                if s > p:
                    raise DataValidationError(f"s={s} exceeds p={p}")
        if any(not 1.0 <= q <= 2.0 for q in self.q_list):
            raise DataValidationError("q_list entries must lie in [1, 2]")
        if self.method == "lepski-lasso" and self.c0 is None:
            raise DataValidationError("lepski-lasso requires c0 (see calibrate_c0)")

    def to_json(self) -> str:
        return json.dumps({"format_version": FORMAT_VERSION, **asdict(self)}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        raw = json.loads(text)
        raw.pop("format_version", None)
        return cls(**raw)


@dataclass(frozen=True)
class CellRecord:
    n: int
    p: int
    s: int
    sigma: float
    method: str
    metric: str
    median: float
    iqr: float
    normalized_ratio: float
    failures: int
    degraded: bool = False


@dataclass(frozen=True)
class RateReport:
    records: tuple
    spec: ExperimentSpec
    replicates: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "replicates", self.spec.replicates)

    def cell(self, n, p, s, sigma, method, metric) -> CellRecord:
        for r in self.records:
            if (r.n, r.p, r.s, r.sigma, r.method, r.metric) == (n, p, s, sigma, method, metric):
                return r
        raise KeyError((n, p, s, sigma, method, metric))


def _rng(seed_parts) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=tuple(seed_parts)))


def generate_design(kind: str, n: int, p: int, rho: float, seed) -> DesignMatrix:
    """Random design with unit-empirical-norm columns, deterministic in seed."""
    if kind not in DESIGN_KINDS:
        raise DataValidationError(f"design kind must be one of {DESIGN_KINDS}")
    rng = np.random.default_rng(seed) if not isinstance(seed, (int, np.integer)) else _rng((seed,))
    raw = rng.normal(size=(n, p))
    if kind == "gaussian-equicorrelated" and rho > 0.0:
        shared = rng.normal(size=(n, 1))
        raw = math.sqrt(1.0 - rho) * raw + math.sqrt(rho) * shared
    return normalize_columns(DesignMatrix(entries=raw))


def generate_instance(design: DesignMatrix, truth: GroundTruth, seed) -> RegressionData:
    """Y = X beta_star + sigma * z with standard normal z."""
    if truth.beta_star.shape[0] != design.p:
        raise DataValidationError("beta_star length must equal the design dimension")
    rng = np.random.default_rng(seed) if not isinstance(seed, (int, np.integer)) else _rng((seed,))
    z = rng.normal(size=design.n)
    y = design.entries @ truth.beta_star + truth.sigma * z
    return RegressionData(design=design, response=y)


def _beta_pattern(spec: ExperimentSpec, p: int, s: int, n: int, rep: int) -> np.ndarray:
    """Unit-magnitude coefficient pattern (scaled by sigma at use)."""
    beta = np.zeros(p)
    if spec.beta_pattern == "first-s-ones":
        beta[:s] = 1.0
    else:
        rng = _rng((spec.seed, _TAG_SUPPORT, n, p, s, rep))
        idx = rng.choice(p, size=s, replace=False)
        beta[idx] = rng.choice([-1.0, 1.0], size=s)
    return beta


def _default_s_star(spec: ExperimentSpec, p: int) -> int:
    if spec.s_star is not None:
        return spec.s_star
    top = max(spec.s_values)
    star = 4
    while star < 2 * top:
        star *= 2
    return min(star, int(math.floor(p / math.e)))


def _normalization(metric: str, n: int, p: int, s: int, sigma: float) -> float:
    if metric == "pred":
        return sigma * math.sqrt(s / n * math.log(p / s)) if s < p else math.nan
    if metric.startswith("l"):
        q = float(metric[1:])
        return sigma * s ** (1.0 / q) * math.sqrt(math.log(2.0 * p / s) / n)
    if metric == "sorted":
        return sigma * (s / n) * math.log(p / s) if s < p else math.nan
    if metric == "sigma_ratio":
        return 1.0
    if metric == "s_tilde":
        return float(s)
    raise DataValidationError(f"unknown metric {metric}")


def _run_task(args) -> list:
    """All (s, sigma, gamma) fits for one (n, p, replicate); returns raw rows."""
    spec, n, p, rep = args
    X = generate_design(
        spec.design_kind, n, p, spec.rho, _rng((spec.seed, _TAG_DESIGN, n, p, rep))
    )
    z = _rng((spec.seed, _TAG_NOISE, n, p, rep)).normal(size=n)
    rows = []
    for s in spec.s_values:
        pattern = _beta_pattern(spec, p, s, n, rep)
        for sigma in spec.sigma_values:
            beta_star = sigma * pattern
            y = X.entries @ beta_star + sigma * z
            data = RegressionData(design=X, response=y)
            for gamma in spec.gamma_values:
                key = (n, p, s, float(sigma), float(gamma))
                try:
                    metrics = _fit_metrics(spec, data, beta_star, s, sigma, gamma)
                    rows.append((key, rep, metrics, None))
                except Exception as exc:  # recorded, not fatal
                    rows.append((key, rep, None, repr(exc)))
    return rows


def _fit_metrics(spec, data, beta_star, s, sigma, gamma) -> dict:
    n, p = data.n, data.p
    X = data.design.entries
    out: dict[str, float] = {}
    if spec.method == "sqrt-lasso":
        fit = fit_sqrt_lasso(data, sqrt_lasso_lambda(n, p, s, gamma), GRID_SOLVER_CONFIG)
        beta_hat, sigma_hat = fit.beta_hat, fit.sigma_hat
    elif spec.method == "sqrt-slope":
        lambdas = sqrt_slope_lambdas(n, p, gamma)
        fit = fit_sqrt_slope(data, lambdas, GRID_SOLVER_CONFIG)
        beta_hat, sigma_hat = fit.beta_hat, fit.sigma_hat
        out["sorted"] = sorted_l1_norm(beta_hat - beta_star, lambdas)
    else:  # lepski-lasso
        acfg = AdaptationConfig(
            s_star=_default_s_star(spec, p), c0=spec.c0, gamma=gamma, distance="prediction"
        )
        res = lepski_aggregate(data, acfg, sqrt_lasso_level_fitter(data, gamma, GRID_SOLVER_CONFIG))
        beta_hat, sigma_hat = res.beta_tilde, res.sigma_hat
        out["s_tilde"] = float(res.s_tilde)
    diff = beta_hat - beta_star
    out["pred"] = empirical_norm(X @ diff)
    for q in spec.q_list:
        out[f"l{q:g}"] = float(np.sum(np.abs(diff) ** q) ** (1.0 / q))
    out["sigma_ratio"] = sigma_hat / sigma if sigma > 0 else math.nan
    return out


def _thread_count() -> int:
    raw = os.environ.get("SQRT_SPARSE_THREADS", "0")
    try:
        val = int(raw)
    except ValueError:
        raise DataValidationError(f"SQRT_SPARSE_THREADS must be an integer, got {raw!r}")
    if val < 0:
        raise DataValidationError("SQRT_SPARSE_THREADS must be nonnegative")
    return (os.cpu_count() or 1) if val == 0 else val


def run_grid(spec: ExperimentSpec) -> RateReport:
    """Execute the full grid and aggregate per-cell medians and IQRs.

    Parallel over (n, p, replicate) groups, capped by SQRT_SPARSE_THREADS
    (0 = auto); output is invariant to the worker count.
    """
    tasks = [
        (spec, n, p, rep)
        for n in spec.n_values
        for p in spec.p_values
        for rep in range(spec.replicates)
    ]
    workers = max(1, min(_thread_count(), len(tasks)))
    if workers == 1:
        chunks = map(_run_task, tasks)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_task, tasks, chunksize=1))
    per_cell: dict = {}
    failures: dict = {}
    for rows in chunks:
        for key, rep, metrics, err in rows:
            if err is not None:
                failures[key] = failures.get(key, 0) + 1
            else:
                per_cell.setdefault(key, []).append(metrics)
    records = []
    for key in sorted(set(per_cell) | set(failures)):
        n, p, s, sigma, gamma = key
        fails = failures.get(key, 0)
        degraded = fails > 0.1 * spec.replicates
        method = spec.method if len(spec.gamma_values) == 1 else f"{spec.method}@g={gamma:g}"
        samples = per_cell.get(key, [])
        metric_names = sorted({m for row in samples for m in row})
        for metric in metric_names:
            vals = np.array([row[metric] for row in samples if metric in row])
            med = float(np.median(vals))
            q75, q25 = np.percentile(vals, [75.0, 25.0])
            norm = _normalization(metric, n, p, s, sigma)
            records.append(
                CellRecord(
                    n=n,
                    p=p,
                    s=s,
                    sigma=sigma,
                    method=method,
                    metric=metric,
                    median=med,
                    iqr=float(q75 - q25),
                    normalized_ratio=med / norm if norm and math.isfinite(norm) else math.nan,
                    failures=fails,
                    degraded=degraded,
                )
            )
    return RateReport(records=tuple(records), spec=spec)


def rate_ratios(report) -> dict:
    """Normalized-ratio table plus min/max spread per (method, metric).

    Accepts a RateReport or an iterable of row dicts (as read back from
    CSV); raises on an empty report.
    """
    if isinstance(report, RateReport):
        rows = [asdict(r) for r in report.records]
    else:
        rows = list(report)
    if not rows:
        raise DataValidationError("empty report")
    table: dict = {}
    for r in rows:
        ratio = float(r["normalized_ratio"])
        if not math.isfinite(ratio) or ratio <= 0:
            continue
        key = (r["method"], r["metric"])
        table.setdefault(key, []).append(
            {"n": int(r["n"]), "p": int(r["p"]), "s": int(r["s"]),
             "sigma": float(r["sigma"]), "ratio": ratio}
        )
    summary = {}
    for (method, metric), cells in sorted(table.items()):
        ratios = [c["ratio"] for c in cells]
        summary[f"{method}/{metric}"] = {
            "min": min(ratios),
            "max": max(ratios),
            "spread": max(ratios) / min(ratios),
            "cells": cells,
        }
    return summary


def calibrate_c0(
    n: int,
    p: int,
    s: int,
    sigma: float,
    gamma: float,
    s_star: int,
    replicates: int,
    seed: int,
    design_kind: str = "gaussian-iid",
    rho: float = 0.0,
    solver_cfg: SolverConfig | None = None,
    safety: float = 1.1,
) -> float:
    """Threshold constant from a held-out cell (prediction distance).

    Uses a seed stream disjoint from run_grid's. For each replicate,
    computes the smallest constant under which the selection set would
    contain the level of the true sparsity, then returns the safety-scaled
    worst case, so the aggregation keeps s_tilde <= s with high frequency.
    """
    solver_cfg = solver_cfg or GRID_SOLVER_CONFIG
    M = int(math.floor(math.log2(s_star)))
    m_s = int(math.floor(math.log2(s)))
    if m_s > M:
        raise DataValidationError("calibration sparsity exceeds s_star")
    w = WeightFunction(kind="prediction", n=n, p=p)
    worst = 0.0
    for rep in range(replicates):
        X = generate_design(design_kind, n, p, rho, _rng((seed, _TAG_CALIBRATION, _TAG_DESIGN, n, p, rep)))
        z = _rng((seed, _TAG_CALIBRATION, _TAG_NOISE, n, p, rep)).normal(size=n)
        beta_star = np.zeros(p)
        beta_star[:s] = sigma
        data = RegressionData(design=X, response=X.entries @ beta_star + sigma * z)
        fitter = sqrt_lasso_level_fitter(data, gamma, solver_cfg)
        fits = {2 ** m: fitter(2 ** m) for m in range(1, M + 2)}
        sigma_hat = fits[2 ** (M + 1)].sigma_hat
        need = max(
            empirical_norm(X.entries @ (fits[2 ** k].beta_hat - fits[2 ** (k + 1)].beta_hat))
            / (4.0 * sigma_hat * w.value(2 ** k))
            for k in range(max(m_s, 1), M + 1)
        )
        worst = max(worst, need)
    return safety * worst


def write_report_csv(report: RateReport, path) -> None:
    """CSV per the fixed header plus a JSON sidecar <path>.meta.json."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in report.records:
            writer.writerow(
                [r.n, r.p, r.s, repr(r.sigma), r.method, r.metric,
                 repr(r.median), repr(r.iqr), repr(r.normalized_ratio), r.failures]
            )
    meta = {
        "format_version": FORMAT_VERSION,
        "spec": json.loads(report.spec.to_json()),
        "degraded_cells": [
            {"n": r.n, "p": r.p, "s": r.s, "sigma": r.sigma, "method": r.method}
            for r in report.records
            if r.degraded
        ],
    }
    with open(f"{path}.meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_report_rows(path) -> list[dict]:
    """Rows of a report CSV as dicts with numeric fields parsed."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise DataValidationError(f"unexpected report header {reader.fieldnames}")
        rows = []
        for raw in reader:
            rows.append(
                {
                    "n": int(raw["n"]),
                    "p": int(raw["p"]),
                    "s": int(raw["s"]),
                    "sigma": float(raw["sigma"]),
                    "method": raw["method"],
                    "metric": raw["metric"],
                    "median": float(raw["median"]),
                    "iqr": float(raw["iqr"]),
                    "normalized_ratio": float(raw["normalized_ratio"]),
                    "failures": int(raw["failures"]),
                }
            )
    return rows
