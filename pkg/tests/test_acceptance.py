"""Acceptance suite: one test per criterion, printing a PASS/FAIL line each.

The Monte Carlo grids are shared across criteria through session fixtures;
all seeds are fixed, so the suite is deterministic.
"""

import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest

import sqrtsparse.experiments as exp_mod
from sqrtsparse import (
    AdaptationConfig,
    ConeSpec,
    DesignMatrix,
    ExperimentSpec,
    LambdaSequence,
    RegressionData,
    SolverConfig,
    WeightFunction,
    assumption1_report,
    calibrate_c0,
    empirical_norm,
    estimate_kappa,
    fit_sqrt_lasso,
    fit_sqrt_slope,
    kkt_residual,
    lepski_aggregate,
    monte_carlo_epsilon_concentration,
    monte_carlo_noise_event,
    noise_functionals,
    normalize_columns,
    prox_sorted_l1,
    run_grid,
    sqrt_lasso_lambda,
    sqrt_lasso_level_fitter,
    sqrt_slope_lambdas,
)
from sqrtsparse.design_conditions import epsilon_concentration_bound
from sqrtsparse.experiments import GRID_SOLVER_CONFIG, _TAG_DESIGN, _TAG_NOISE, _rng
from helpers import make_instance
from oracles import certified_oracle_objective, prox_bruteforce, ref_sorted_l1

ROOT_SEED = 20240707
GAMMA_PRACTICAL = 1.2
GRID_N = (200, 400, 800)
GRID_P = (1000,)
GRID_S = (2, 5, 10)
GRID_SIGMA = (0.5, 1.0, 2.0)
GRID_REPLICATES = 50
LEPSKI_S_STAR = 16

TIGHT = SolverConfig(objective_tol=1e-11, kkt_tol=1e-10, max_outer_iters=300)


def report(criterion: int, passed: bool, detail: str):
    status = "PASS" if passed else "FAIL"
    print(f"[acceptance] criterion {criterion:2d} {status}: {detail}", file=sys.__stdout__)
    assert passed, f"criterion {criterion}: {detail}"


def grid_spec(method: str, **overrides) -> ExperimentSpec:
    base = dict(
        n_values=GRID_N,
        p_values=GRID_P,
        s_values=GRID_S,
        sigma_values=GRID_SIGMA,
        gamma_values=(GAMMA_PRACTICAL,),
        method=method,
        replicates=GRID_REPLICATES,
        seed=ROOT_SEED,
        q_list=(1.0, 2.0),
    )
    base.update(overrides)
    return ExperimentSpec(**base)


@pytest.fixture(scope="session")
def lasso_grid_report():
    t0 = time.perf_counter()
    rep = run_grid(grid_spec("sqrt-lasso"))
    return rep, time.perf_counter() - t0


@pytest.fixture(scope="session")
def slope_grid_report():
    t0 = time.perf_counter()
    rep = run_grid(grid_spec("sqrt-slope"))
    return rep, time.perf_counter() - t0


def test_criterion_1_prox_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(ROOT_SEED)
    worst = 0.0
    for _ in range(200):
        p = int(rng.integers(1, 7))
        v = rng.normal(scale=2.0, size=p)
        w = np.sort(rng.random(p))[::-1] + 0.05
        t = float(rng.random() * 2.0)
        ours = prox_sorted_l1(v, LambdaSequence(weights=w, gamma=1.0), t)
        brute = prox_bruteforce(v, w, t)
        worst = max(worst, float(np.max(np.abs(ours - brute))))
    elapsed = time.perf_counter() - t0
    report(
        1,
        worst <= 1e-6 and elapsed < 30.0,
        f"200 instances, worst linf {worst:.2e} (tol 1e-6), {elapsed:.1f}s (cap 30s)",
    )


def test_criterion_2_solver_optimality():
    t0 = time.perf_counter()
    n, p, s = 20, 50, 3
    lam = sqrt_lasso_lambda(n, p, s, 1.0)
    seq = sqrt_slope_lambdas(n, p, 1.0)
    worst_kkt = 0.0
    worst_rel = 0.0
    for seed in range(100):
        data, _, _ = make_instance(n, p, s, 0.5, seed=seed)
        X, y = data.design.entries, data.response
        for fit, weights, penalty in (
            (fit_sqrt_lasso(data, lam, TIGHT), np.full(p, lam), lam),
            (fit_sqrt_slope(data, seq, TIGHT), seq.weights, seq),
        ):
            worst_kkt = max(worst_kkt, kkt_residual(data, fit.beta_hat, penalty))
            _, f_oracle = certified_oracle_objective(X, y, weights)
            worst_rel = max(worst_rel, abs(fit.objective - f_oracle) / f_oracle)
    elapsed = time.perf_counter() - t0
    report(
        2,
        worst_kkt <= 1e-6 and worst_rel <= 1e-8 and elapsed < 120.0,
        f"100 instances x2 fits, worst kkt {worst_kkt:.2e} (tol 1e-6), "
        f"worst rel objective gap {worst_rel:.2e} (tol 1e-8), {elapsed:.0f}s (cap 120s)",
    )


def test_criterion_3_scale_equivariance():
    n, p, s = 50, 100, 3
    data, _, _ = make_instance(n, p, s, 1.0, seed=5)
    lam = sqrt_lasso_lambda(n, p, s, 1.0)
    seq = sqrt_slope_lambdas(n, p, 1.0)
    worst = 0.0
    for fitter in (
        lambda d: fit_sqrt_lasso(d, lam, TIGHT),
        lambda d: fit_sqrt_slope(d, seq, TIGHT),
    ):
        base = fitter(data)
        ref_scale = float(np.max(np.abs(base.beta_hat)))
        for c in (0.1, 1.0, 10.0):
            scaled = fitter(RegressionData(design=data.design, response=c * data.response))
            err_beta = float(np.max(np.abs(scaled.beta_hat - c * base.beta_hat))) / (c * ref_scale)
            err_sigma = abs(scaled.sigma_hat - c * base.sigma_hat) / (c * base.sigma_hat)
            worst = max(worst, err_beta, err_sigma)
    report(3, worst <= 1e-6, f"c in {{0.1,1,10}}, worst relative deviation {worst:.2e} (tol 1e-6)")


def test_criterion_4_first_order_inequalities():
    n, p, s, sigma = 40, 60, 2, 1.0
    lam = sqrt_lasso_lambda(n, p, s, GAMMA_PRACTICAL)
    seq = sqrt_slope_lambdas(n, p, GAMMA_PRACTICAL)
    slack = 1e-8
    violations = 0
    worst_margin = np.inf
    for seed in range(500):
        data, beta_star, eps = make_instance(n, p, s, sigma, seed=seed, amplitude=2.0)
        X, y = data.design.entries, data.response
        S = np.flatnonzero(beta_star)
        eps_norm = float(np.linalg.norm(eps))
        fl = fit_sqrt_lasso(data, lam, TIGHT)
        fs = fit_sqrt_slope(data, seq, TIGHT)
        assert fl.converged and fs.converged

        u = fl.beta_hat - beta_star
        inner = float(eps @ (X @ u))
        mask = np.zeros(p, dtype=bool)
        mask[S] = True
        checks = [
            np.abs(u[mask]).sum()
            + inner / (lam * math.sqrt(n) * eps_norm)
            - np.abs(u[~mask]).sum(),
            inner
            + lam * math.sqrt(n) * float(np.linalg.norm(y - X @ fl.beta_hat)) * np.abs(u).sum()
            - float(np.linalg.norm(X @ u)) ** 2,
        ]
        w = fs.beta_hat - beta_star
        mags = np.sort(np.abs(w))[::-1]
        inner_w = float(eps @ (X @ w))
        checks.append(
            float(mags[:s] @ seq.weights[:s])
            + inner_w / (math.sqrt(n) * eps_norm)
            - float(mags[s:] @ seq.weights[s:])
        )
        checks.append(
            inner_w
            + math.sqrt(n)
            * float(np.linalg.norm(y - X @ fs.beta_hat))
            * ref_sorted_l1(w, seq.weights)
            - float(np.linalg.norm(X @ w)) ** 2
        )
        worst_margin = min(worst_margin, min(checks))
        violations += sum(c < -slack for c in checks)
    report(
        4,
        violations == 0,
        f"500 instances x4 inequalities, violations beyond 1e-8: {violations}, "
        f"smallest margin {worst_margin:+.2e}",
    )


def test_criterion_5_noise_concentration():
    t0 = time.perf_counter()
    details = []
    ok = True
    for n in (50, 100, 200):
        freq = monte_carlo_epsilon_concentration(n, 1.0, 10_000, seed=ROOT_SEED)
        bound = epsilon_concentration_bound(n)
        margin = 3.0 * math.sqrt(max(freq * (1.0 - freq), 1e-12) / 10_000)
        ok &= freq >= bound - margin
        details.append(f"n={n}: {freq:.4f} >= {bound:.4f}-{margin:.4f}")
    assert epsilon_concentration_bound(100) == pytest.approx(0.86993, abs=1e-5)
    elapsed = time.perf_counter() - t0
    report(5, ok and elapsed < 10.0, "; ".join(details) + f"; {elapsed:.1f}s (cap 10s)")


def test_criterion_6_dual_noise_event():
    n, p, s, delta0 = 100, 50, 5, 0.05
    reps = 2000
    rng = np.random.default_rng(ROOT_SEED + 6)
    raw = rng.normal(size=(n, p))
    design = normalize_columns(DesignMatrix(entries=raw))
    freq = monte_carlo_noise_event(design, 1.0, s, delta0, reps, seed=ROOT_SEED)
    se = math.sqrt((1.0 - delta0 / 2.0) * (delta0 / 2.0) / reps)
    threshold = 1.0 - delta0 / 2.0 - 3.0 * se
    h_violations = 0
    for _ in range(1000):
        u = rng.normal(size=p)
        _, H, F = noise_functionals(u, design, 1.0, s, delta0)
        h_violations += H > F + 1e-12
    report(
        6,
        freq >= threshold and h_violations == 0,
        f"dual event freq {freq:.4f} >= {threshold:.4f}; H<=F violations {h_violations}/1000",
    )


def _ratio_table(rep, metric="pred"):
    out = {}
    for r in rep.records:
        if r.metric == metric:
            out[(r.n, r.s, r.sigma)] = r.normalized_ratio
    return out


def test_criterion_7_rate_scaling(lasso_grid_report, slope_grid_report):
    details = []
    ok = True
    for name, (rep, _) in (("sqrt-lasso", lasso_grid_report), ("sqrt-slope", slope_grid_report)):
        ratios = _ratio_table(rep)
        assert len(ratios) == 27
        spread = max(ratios.values()) / min(ratios.values())
        ok &= spread <= 3.0
        # sigma invariance under paired seeds
        sig_dev = 0.0
        for n in GRID_N:
            for s in GRID_S:
                vals = [ratios[(n, s, sig)] for sig in GRID_SIGMA]
                sig_dev = max(sig_dev, max(vals) / min(vals) - 1.0)
        ok &= sig_dev <= 0.02
        details.append(f"{name}: spread {spread:.2f} (cap 3), sigma dev {sig_dev:.2e} (cap 2e-2)")
    elapsed = lasso_grid_report[1] + slope_grid_report[1]
    ok &= elapsed < 900.0
    report(7, ok, "; ".join(details) + f"; grids took {elapsed:.0f}s (cap 900s)")


def test_grid_sigma_sandwich(lasso_grid_report):
    # harness-level scale recovery: median sigma_hat/sigma within [1/2, alpha]
    from sqrtsparse import RateConstants

    alpha = RateConstants(gamma=GAMMA_PRACTICAL, kappa=1.0).alpha
    rep, _ = lasso_grid_report
    for r in rep.records:
        if r.metric == "sigma_ratio":
            assert 0.5 <= r.median <= alpha


def _lepski_task(args):
    """One (n, p, replicate): lepski selection for every (s, sigma) cell."""
    n, p, rep, c0 = args
    X = exp_mod.generate_design(
        "gaussian-iid", n, p, 0.0, _rng((ROOT_SEED, _TAG_DESIGN, n, p, rep))
    )
    z = _rng((ROOT_SEED, _TAG_NOISE, n, p, rep)).normal(size=n)
    out = []
    for s in GRID_S:
        pattern = np.zeros(p)
        pattern[:s] = 1.0
        for sigma in GRID_SIGMA:
            beta_star = sigma * pattern
            y = X.entries @ beta_star + sigma * z
            data = RegressionData(design=X, response=y)
            cfg = AdaptationConfig(
                s_star=LEPSKI_S_STAR, c0=c0, gamma=GAMMA_PRACTICAL, distance="prediction"
            )
            res = lepski_aggregate(
                data, cfg, sqrt_lasso_level_fitter(data, GAMMA_PRACTICAL, GRID_SOLVER_CONFIG)
            )
            d_sel = empirical_norm(X.entries @ (res.beta_tilde - beta_star))
            out.append((n, s, sigma, rep, res.s_tilde, d_sel))
    return out


@pytest.fixture(scope="session")
def lepski_results():
    c0 = calibrate_c0(
        n=200,
        p=1000,
        s=10,
        sigma=1.0,
        gamma=GAMMA_PRACTICAL,
        s_star=LEPSKI_S_STAR,
        replicates=40,
        seed=ROOT_SEED,
    )
    tasks = [(n, 1000, rep, c0) for n in GRID_N for rep in range(GRID_REPLICATES)]
    t0 = time.perf_counter()
    with ProcessPoolExecutor(max_workers=2) as pool:
        chunks = list(pool.map(_lepski_task, tasks, chunksize=4))
    rows = [row for chunk in chunks for row in chunk]
    return {"c0": c0, "rows": rows, "elapsed": time.perf_counter() - t0}


def test_criterion_8_lepski_adaptation(lepski_results, lasso_grid_report):
    c0 = lepski_results["c0"]
    rows = lepski_results["rows"]
    by_cell: dict = {}
    for n, s, sigma, rep, s_tilde, d_sel in rows:
        by_cell.setdefault((n, s, sigma), []).append((s_tilde, d_sel))
    ok = True
    worst_p = 1.0
    worst_ratio = 0.0
    for (n, s, sigma), vals in sorted(by_cell.items()):
        assert len(vals) == GRID_REPLICATES
        p_sel = np.mean([st <= s for st, _ in vals])
        med_sel = float(np.median([d for _, d in vals]))
        med_oracle = lasso_grid_report[0].cell(n, 1000, s, sigma, "sqrt-lasso", "pred").median
        ratio = med_sel / med_oracle
        ok &= p_sel >= 0.95
        ok &= ratio <= 4.0
        worst_p = min(worst_p, p_sel)
        worst_ratio = max(worst_ratio, ratio)
    # exact monotonicity of the selected level in the threshold constant
    mono_ok = True
    n, p, s, sigma = 200, 1000, 10, 1.0
    for rep in range(10):
        X = exp_mod.generate_design(
            "gaussian-iid", n, p, 0.0, _rng((ROOT_SEED, _TAG_DESIGN, n, p, rep))
        )
        z = _rng((ROOT_SEED, _TAG_NOISE, n, p, rep)).normal(size=n)
        beta_star = np.zeros(p)
        beta_star[:s] = sigma
        data = RegressionData(design=X, response=X.entries @ beta_star + sigma * z)
        fitter = sqrt_lasso_level_fitter(data, GAMMA_PRACTICAL, GRID_SOLVER_CONFIG)
        m_values = [
            lepski_aggregate(
                data,
                AdaptationConfig(s_star=LEPSKI_S_STAR, c0=c, gamma=GAMMA_PRACTICAL),
                fitter,
            ).m_tilde
            for c in (0.0, 0.25 * c0, c0, 4.0 * c0, 100.0 * c0)
        ]
        mono_ok &= all(a >= b for a, b in zip(m_values, m_values[1:]))
    report(
        8,
        ok and mono_ok,
        f"calibrated C0 {c0:.4f}; worst P(s_tilde<=s) {worst_p:.2f} (need 0.95); "
        f"worst distance ratio {worst_ratio:.2f} (cap 4); monotone in C0: {mono_ok}; "
        f"{lepski_results['elapsed']:.0f}s",
    )


def test_criterion_9_kappa_diagnostics():
    ortho = DesignMatrix(entries=math.sqrt(16.0) * np.eye(16))
    est = estimate_kappa(ortho, ConeSpec(kind="sre", s=3, c0=5 / 3), restarts=4, seed=0)
    exact_ok = est.value == 1.0 and est.kind == "exact"

    rng = np.random.default_rng(ROOT_SEED + 9)
    raw = rng.normal(size=(60, 30))
    raw[:, 1] = raw[:, 0]
    dup = normalize_columns(DesignMatrix(entries=raw))
    cone = ConeSpec(kind="sre", s=2, c0=5 / 3)
    est_dup = estimate_kappa(dup, cone, restarts=8, seed=1)
    w = est_dup.best_witness
    dup_ok = (
        est_dup.value <= 1e-6
        and cone.contains(w, tol=1e-10)
        and abs(np.linalg.norm(w) - 1.0) <= 1e-10
        and abs(empirical_norm(dup.entries @ w) - est_dup.value) <= 1e-10
    )

    mono_bad = 0
    for trial in range(20):
        design = normalize_columns(
            DesignMatrix(entries=np.random.default_rng(1000 + trial).normal(size=(100, 30)))
        )
        vals = [
            estimate_kappa(design, ConeSpec(kind="sre", s=s, c0=5 / 3), restarts=8, seed=7).value
            for s in (1, 2, 3, 5, 8)
        ]
        mono_bad += not all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))
    report(
        9,
        exact_ok and dup_ok and mono_bad == 0,
        f"orthonormal exact: {exact_ok}; duplicated-column kappa {est_dup.value:.2e} "
        f"with valid witness: {dup_ok}; non-monotone designs {mono_bad}/20",
    )


def test_criterion_10_weight_function_clauses():
    t0 = time.perf_counter()
    failures = 0
    checked = 0
    for p in range(6, 501):
        s_star = int(math.floor(p / math.e))
        if s_star < 2:
            continue
        for kind, q in (("prediction", 2.0), ("lq", 1.0), ("lq", 1.5), ("lq", 2.0)):
            rep = assumption1_report(WeightFunction(kind=kind, n=100, p=p, q=q), s_star)
            checked += 1
            if not (rep["increasing"] and rep["geometric_sum"] and rep["doubling"]):
                failures += 1
    elapsed = time.perf_counter() - t0
    report(
        10,
        failures == 0,
        f"{checked} (p, kind, q) combinations with s*=floor(p/e), clause failures: {failures}; "
        f"{elapsed:.0f}s",
    )
