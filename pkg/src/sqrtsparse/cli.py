"""Command-line interface: fit, adapt, simulate, rates, check-design.

Exit codes: 0 success, 2 usage error, 3 data error, 4 solver
non-convergence. Output schemas carry ``format_version: 1``. Columns are
normalized internally when needed; coefficients are reported in the
original column scaling.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__
from .adaptivity import AdaptationConfig, lepski_aggregate, sqrt_lasso_level_fitter
from .design_conditions import (
    ConeSpec,
    SRE_C0_DEFAULT,
    WRE_C0_DEFAULT,
    estimate_kappa,
    validate_theorem1_conditions,
    validate_theorem3_conditions,
)
from .experiments import (
    ExperimentSpec,
    rate_ratios,
    read_report_rows,
    run_grid,
    write_report_csv,
)
from .model import DataValidationError, RegressionData, load_design_csv, load_response_csv, normalize_columns
from .penalties import sqrt_lasso_lambda, sqrt_slope_lambdas
from .solvers import SolverConfig, fit_sqrt_lasso, fit_sqrt_slope

GAMMA_DEFAULT = 16.0 + 4.0 * math.sqrt(2.0)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NO_CONVERGENCE = 4

_DISTANCES = {"pred": ("prediction", 2.0), "l1": ("lq", 1.0), "l2": ("lq", 2.0)}


def _load_data(x_path: str, y_path: str):
    design = load_design_csv(x_path)
    y = load_response_csv(y_path)
    rescaled = not design.normalized
    if rescaled:
        design = normalize_columns(design)
    return RegressionData(design=design, response=y), rescaled


def _back_transform(beta: np.ndarray, design) -> np.ndarray:
    if design.scale_factors is None:
        return beta
    return beta / design.scale_factors


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_fit(args) -> int:
    data, rescaled = _load_data(args.x, args.y)
    cfg = SolverConfig()
    if args.method == "sqrt-lasso":
        if args.s is None:
            raise UsageError("--s is required for method sqrt-lasso")
        lam = sqrt_lasso_lambda(data.n, data.p, args.s, args.gamma)
        fit = fit_sqrt_lasso(data, lam, cfg)
    else:
        fit = fit_sqrt_slope(data, sqrt_slope_lambdas(data.n, data.p, args.gamma), cfg)
    beta_out = _back_transform(fit.beta_hat, data.design)
    payload = {
        "format_version": 1,
        "method": args.method,
        "gamma": args.gamma,
        "beta": beta_out.tolist(),
        "sigma_hat": fit.sigma_hat,
        "objective": fit.objective,
        "kkt_residual": fit.kkt_residual,
        "converged": fit.converged,
        "degenerate": fit.degenerate,
        "column_scaling_applied": rescaled,
    }
    _write_json(args.out, payload)
    return EXIT_OK if fit.converged or fit.degenerate else EXIT_NO_CONVERGENCE


def _cmd_adapt(args) -> int:
    data, rescaled = _load_data(args.x, args.y)
    distance, q = _DISTANCES[args.distance]
    acfg = AdaptationConfig(s_star=args.s_star, c0=args.c0, gamma=args.gamma, distance=distance, q=q)
    fitter = sqrt_lasso_level_fitter(data, args.gamma, SolverConfig())
    result = lepski_aggregate(data, acfg, fitter)
    payload = {
        "format_version": 1,
        "beta_tilde": _back_transform(result.beta_tilde, data.design).tolist(),
        "s_tilde": result.s_tilde,
        "m_tilde": result.m_tilde,
        "sigma_hat": result.sigma_hat,
        "selection_set_nonempty": result.selection_set_nonempty,
        "column_scaling_applied": rescaled,
        "levels": [
            {
                "level": level,
                "sigma_hat": fit.sigma_hat,
                "objective": fit.objective,
                "kkt_residual": fit.kkt_residual,
                "converged": fit.converged,
                "nonzeros": int(np.count_nonzero(fit.beta_hat)),
            }
            for level, fit in zip(result.levels, result.per_level_fits)
        ],
    }
    _write_json(args.out, payload)
    ok = all(f.converged or f.degenerate for f in result.per_level_fits)
    return EXIT_OK if ok else EXIT_NO_CONVERGENCE


def _cmd_simulate(args) -> int:
    with open(args.spec) as fh:
        text = fh.read()
    try:
        spec = ExperimentSpec.from_json(text)
    except (json.JSONDecodeError, TypeError) as exc:
        raise DataValidationError(f"invalid experiment spec: {exc}") from exc
    report = run_grid(spec)
    write_report_csv(report, args.out)
    return EXIT_OK


def _cmd_rates(args) -> int:
    rows = read_report_rows(args.report)
    summary = rate_ratios(rows)
    json.dump({"format_version": 1, "summary": summary}, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


def _cmd_check_design(args) -> int:
    design = load_design_csv(args.x)
    rescaled = not design.normalized
    if rescaled:
        design = normalize_columns(design)
    if args.cone == "sre":
        c0 = args.c0 if args.c0 is not None else SRE_C0_DEFAULT
        cone = ConeSpec(kind="sre", s=args.s, c0=c0)
    else:
        c0 = args.c0 if args.c0 is not None else WRE_C0_DEFAULT
        cone = ConeSpec(
            kind="wre", s=args.s, c0=c0,
            lambdas=sqrt_slope_lambdas(design.n, design.p, args.gamma),
        )
    est = estimate_kappa(design, cone, restarts=args.restarts, seed=args.seed)
    witness = est.best_witness
    witness_value = float(np.linalg.norm(design.entries @ witness)) / math.sqrt(design.n)
    if args.cone == "sre":
        report = validate_theorem1_conditions(design.n, design.p, args.s, args.gamma, max(est.value, 1e-12))
    else:
        report = validate_theorem3_conditions(design.n, design.p, args.s, args.gamma, max(est.value, 1e-12))
    payload = {
        "format_version": 1,
        "cone": args.cone,
        "s": args.s,
        "c0": c0,
        "kappa": est.value,
        "kind": est.kind,
        "restarts": est.restarts,
        "witness_value_matches": abs(witness_value - est.value) <= 1e-10,
        "witness_in_cone": cone.contains(witness),
        "column_scaling_applied": rescaled,
        "conditions": {
            "gamma_ok": report.gamma_ok,
            "growth_ok": report.growth_ok,
            "growth_lhs": report.growth_lhs,
            "growth_rhs": report.growth_rhs,
        },
    }
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sqrtsparse", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a square-root estimator to CSV data")
    p_fit.add_argument("--x", required=True, help="design matrix CSV (no header)")
    p_fit.add_argument("--y", required=True, help="response CSV (one value per line)")
    p_fit.add_argument("--method", required=True, choices=["sqrt-lasso", "sqrt-slope"])
    p_fit.add_argument("--gamma", type=float, default=GAMMA_DEFAULT)
    p_fit.add_argument("--s", type=int, default=None, help="sparsity level (sqrt-lasso only)")
    p_fit.add_argument("--out", required=True)
    p_fit.set_defaults(func=_cmd_fit)

    p_adapt = sub.add_parser("adapt", help="sparsity-adaptive aggregation of level fits")
    p_adapt.add_argument("--x", required=True)
    p_adapt.add_argument("--y", required=True)
    p_adapt.add_argument("--gamma", type=float, default=GAMMA_DEFAULT)
    p_adapt.add_argument("--s-star", dest="s_star", type=int, required=True)
    p_adapt.add_argument("--c0", type=float, required=True)
    p_adapt.add_argument("--distance", choices=sorted(_DISTANCES), default="pred")
    p_adapt.add_argument("--out", required=True)
    p_adapt.set_defaults(func=_cmd_adapt)

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo grid from a JSON spec")
    p_sim.add_argument("--spec", required=True, help="ExperimentSpec JSON")
    p_sim.add_argument("--out", required=True, help="report CSV path")
    p_sim.set_defaults(func=_cmd_simulate)

    p_rates = sub.add_parser("rates", help="summarize normalized rate ratios of a report")
    p_rates.add_argument("--report", required=True)
    p_rates.set_defaults(func=_cmd_rates)

    p_chk = sub.add_parser("check-design", help="restricted-eigenvalue diagnostics")
    p_chk.add_argument("--x", required=True)
    p_chk.add_argument("--s", type=int, required=True)
    p_chk.add_argument("--c0", type=float, default=None)
    p_chk.add_argument("--cone", choices=["sre", "wre"], default="sre")
    p_chk.add_argument("--restarts", type=int, default=10)
    p_chk.add_argument("--seed", type=int, required=True)
    p_chk.add_argument("--gamma", type=float, default=GAMMA_DEFAULT)
    p_chk.set_defaults(func=_cmd_check_design)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))  # exits 2
    except (DataValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
