"""Restricted-eigenvalue diagnostics and noise-event Monte Carlo checks.

The cone-constrained minimum of ||X d||_n / |d|_2 is non-convex, so the
estimate is an upper bound: projected gradient descent on the sphere with
a shrink-toward-the-cone-boundary projection, multi-restart (random cone
points plus the trailing right singular vectors). Orthonormal designs are
detected and short-circuited to the exact value 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import DataValidationError, DesignMatrix
from .penalties import LambdaSequence

SQRT2 = math.sqrt(2.0)
GAMMA_THEORY = 16.0 + 4.0 * SQRT2
NOISE_CONST = 4.0 + SQRT2
ORTHONORMAL_TOL = 1e-10

SRE_C0_DEFAULT = 5.0 / 3.0
WRE_C0_DEFAULT = 8.0


@dataclass(frozen=True)
class ConeSpec:
    """Cone of approximately sparse directions.

    sre: |d|_1 <= (1+c0) sqrt(s) |d|_2;
    wre: |d|_* <= (1+c0) |d|_2 sqrt(sum of the s largest squared weights),
    with the weight sequence required for the wre kind.
    """

    kind: str
    s: int
    c0: float
    lambdas: LambdaSequence | None = None

    def __post_init__(self):
        if self.kind not in ("sre", "wre"):
            raise DataValidationError("cone kind must be 'sre' or 'wre'")
        if self.s < 1:
            raise DataValidationError("s must be >= 1")
        if self.c0 <= 0:
            raise DataValidationError("c0 must be positive")
        if self.kind == "wre" and self.lambdas is None:
            raise DataValidationError("wre cone requires a weight sequence")

    def radius(self) -> float:
        """Right-hand scale of the membership inequality (per unit |d|_2)."""
        if self.kind == "sre":
            return (1.0 + self.c0) * math.sqrt(self.s)
        lam = self.lambdas.weights
        return (1.0 + self.c0) * math.sqrt(float(np.sum(lam[: self.s] ** 2)))

    def gauge(self, d: np.ndarray) -> float:
        """Left-hand norm of the membership inequality."""
        if self.kind == "sre":
            return float(np.abs(d).sum())
        mags = np.sort(np.abs(d))[::-1]
        return float(mags @ self.lambdas.weights)

    def contains(self, d: np.ndarray, tol: float = 1e-10) -> bool:
        l2 = float(np.linalg.norm(d))
        return self.gauge(d) <= self.radius() * l2 * (1.0 + tol) + tol


@dataclass(frozen=True)
class KappaEstimate:
    value: float
    kind: str  # 'exact' | 'heuristic-upper'
    restarts: int
    best_witness: np.ndarray


def _shrink_sre_exact(d: np.ndarray, target: float) -> np.ndarray:
    """Soft-threshold d by the exact tau putting |d|_1/|d|_2 on ``target``.

    Per-segment quadratic solve over the sorted magnitudes; returns d
    unchanged when already inside.
    """
    a = np.abs(d)
    if a.sum() <= target * np.linalg.norm(d):
        return d
    asort = np.sort(a)[::-1]
    S = np.cumsum(asort)
    Q = np.cumsum(asort ** 2)
    c2 = target * target
    p = a.size
    for k in range(1, p + 1):
        hi = asort[k - 1]
        lo = asort[k] if k < p else 0.0
        A = k * (k - c2)
        B = 2.0 * S[k - 1] * (c2 - k)
        C = S[k - 1] ** 2 - c2 * Q[k - 1]
        if abs(A) < 1e-300:
            roots = [] if abs(B) < 1e-300 else [-C / B]
        else:
            disc = B * B - 4.0 * A * C
            if disc < 0.0:
                continue
            sq = math.sqrt(disc)
            roots = [(-B - sq) / (2.0 * A), (-B + sq) / (2.0 * A)]
        for tau in roots:
            if lo - 1e-12 <= tau <= hi + 1e-12:
                tau = min(max(tau, lo), hi)
                out = np.sign(d) * np.maximum(a - tau, 0.0)
                if np.linalg.norm(out) > 0.0:
                    return out
    out = np.zeros_like(d)
    j = int(np.argmax(a))
    out[j] = d[j]
    return out


def _shrink_wre_bisect(d: np.ndarray, cone: ConeSpec) -> np.ndarray:
    """Bisected soft threshold onto the weighted-cone boundary."""
    radius = cone.radius()
    if cone.gauge(d) <= radius * np.linalg.norm(d):
        return d
    a = np.abs(d)
    lo, hi = 0.0, float(a.max())
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        dm = np.sign(d) * np.maximum(a - mid, 0.0)
        nd = float(np.linalg.norm(dm))
        if nd == 0.0 or cone.gauge(dm) > radius * nd:
            lo = mid
        else:
            hi = mid
    dm = np.sign(d) * np.maximum(a - hi, 0.0)
    if np.linalg.norm(dm) == 0.0:
        dm = np.zeros_like(d)
        j = int(np.argmax(a))
        dm[j] = d[j]
    return dm


def _project_cone(d: np.ndarray, cone: ConeSpec) -> np.ndarray:
    if cone.kind == "sre":
        return _shrink_sre_exact(d, (1.0 + cone.c0) * math.sqrt(cone.s))
    return _shrink_wre_bisect(d, cone)


def estimate_kappa(
    design: DesignMatrix,
    cone: ConeSpec,
    restarts: int = 10,
    seed: int = 0,
    iters: int = 250,
) -> KappaEstimate:
    """Heuristic upper bound on min ||X d||_n / |d|_2 over the cone.

    The witness always certifies the value (value = ||X w||_n with w a
    unit vector inside the cone); only the minimality is heuristic.
    """
    if not design.normalized:
        raise DataValidationError("kappa estimation requires a column-normalized design")
    X = design.entries
    n, p = X.shape
    if cone.kind == "wre" and cone.lambdas.p != p:
        raise DataValidationError("weight sequence length must equal the dimension")

    gram_dev = np.abs(X.T @ X / n - np.eye(p)).max() if p <= 4096 else np.inf
    if gram_dev <= ORTHONORMAL_TOL:
        e1 = np.zeros(p)
        e1[0] = 1.0
        return KappaEstimate(value=1.0, kind="exact", restarts=restarts, best_witness=e1)

    rng = np.random.default_rng(seed)
    _, sv, Vt = np.linalg.svd(X, full_matrices=False)
    starts = [Vt[-1 - k] for k in range(min(4, Vt.shape[0]))]
    for _ in range(restarts):
        d0 = np.zeros(p)
        size = min(int(rng.integers(1, max(2, 2 * cone.s))), p)
        idx = rng.choice(p, size=size, replace=False)
        d0[idx] = rng.normal(size=size)
        starts.append(d0)
    L = float(sv[0] ** 2 / n)

    best_val, best_w = np.inf, None
    for d0 in starts:
        d = _project_cone(d0, cone)
        nd = float(np.linalg.norm(d))
        if nd == 0.0:
            continue
        d = d / nd
        step = 0.8 / L
        val = float(np.linalg.norm(X @ d) ** 2 / n)
        for _ in range(iters):
            g = (X.T @ (X @ d)) / n
            d_new = _project_cone(d - step * g, cone)
            nd = float(np.linalg.norm(d_new))
            if nd < 1e-14:
                break
            d_new /= nd
            val_new = float(np.linalg.norm(X @ d_new) ** 2 / n)
            if val_new >= val - 1e-18:
                step *= 0.6
                if step < 1e-10 / L:
                    break
            else:
                d, val = d_new, val_new
        if val < best_val:
            best_val, best_w = val, d.copy()
    return KappaEstimate(
        value=float(math.sqrt(max(best_val, 0.0))),
        kind="heuristic-upper",
        restarts=restarts,
        best_witness=best_w,
    )


@dataclass(frozen=True)
class ConditionReport:
    """Per-clause verdicts for the deviation-theorem hypotheses."""

    gamma_ok: bool
    growth_ok: bool
    gamma: float
    gamma_min: float
    growth_lhs: float
    growth_rhs: float

    @property
    def all_ok(self) -> bool:
        return self.gamma_ok and self.growth_ok

    @property
    def growth_slack(self) -> float:
        return self.growth_rhs - self.growth_lhs


def validate_theorem1_conditions(
    n: int, p: int, s: int, gamma: float, kappa: float
) -> ConditionReport:
    """gamma >= 16 + 4*sqrt(2) and (s/n) log(2p/s) <= 9 kappa^2 / (256 gamma^2)."""
    if not 0.0 < kappa <= 1.0:
        raise DataValidationError("kappa must lie in (0, 1]")
    lhs = s / n * math.log(2.0 * p / s)
    rhs = 9.0 * kappa ** 2 / (256.0 * gamma ** 2)
    return ConditionReport(
        gamma_ok=gamma >= GAMMA_THEORY,
        growth_ok=lhs <= rhs,
        gamma=gamma,
        gamma_min=GAMMA_THEORY,
        growth_lhs=lhs,
        growth_rhs=rhs,
    )


def validate_theorem3_conditions(
    n: int, p: int, s: int, gamma_prime: float, kappa_prime: float
) -> ConditionReport:
    """gamma' >= 16 + 4*sqrt(2) and (s/n) log(2ep/s) <= kappa'^2 / (256 gamma'^2)."""
    if not 0.0 < kappa_prime <= 1.0:
        raise DataValidationError("kappa must lie in (0, 1]")
    lhs = s / n * math.log(2.0 * math.e * p / s)
    rhs = kappa_prime ** 2 / (256.0 * gamma_prime ** 2)
    return ConditionReport(
        gamma_ok=gamma_prime >= GAMMA_THEORY,
        growth_ok=lhs <= rhs,
        gamma=gamma_prime,
        gamma_min=GAMMA_THEORY,
        growth_lhs=lhs,
        growth_rhs=rhs,
    )


def noise_functionals(
    u, design: DesignMatrix, sigma: float, s: int, delta0: float
) -> tuple[float, float, float]:
    """The three noise-comparison functionals (G, H, F) at a direction u.

    G scales with the prediction norm of u and the confidence level, H with
    the rank-weighted magnitudes, F with the split into the s largest
    magnitudes and the tail. H(u) <= F(u) on generic directions.
    """
    if not 0.0 < delta0 < 1.0:
        raise DataValidationError("delta0 must lie in (0, 1)")
    if not 1 <= s <= design.p:
        raise DataValidationError("s must lie in [1, p]")
    X = design.entries
    n, p = X.shape
    uv = np.asarray(u, dtype=float)
    if uv.shape[0] != p:
        raise DataValidationError("u must have length p")
    mags = np.sort(np.abs(uv))[::-1]
    xu_n = float(np.linalg.norm(X @ uv)) / math.sqrt(n)
    G = NOISE_CONST * sigma * math.sqrt(math.log(1.0 / delta0) / n) * xu_n
    ranks = np.arange(1, p + 1, dtype=float)
    H = NOISE_CONST * sigma * float(mags @ np.sqrt(np.log(2.0 * p / ranks) / n))
    F = (
        NOISE_CONST
        * sigma
        * math.sqrt(math.log(2.0 * p / s) / n)
        * (math.sqrt(s) * float(np.linalg.norm(uv)) + float(mags[s:].sum()))
    )
    return G, H, F


def monte_carlo_noise_event(
    design: DesignMatrix,
    sigma: float,
    s: int,
    delta0: float,
    replicates: int,
    seed: int = 0,
) -> float:
    """Empirical frequency of the rank-wise dual noise condition.

    Checks, per noise draw, |X^T eps|_(j) / n <= (4+sqrt(2)) sigma
    sqrt(log(2p/j)/n) for every rank j; this sufficient condition implies
    the H-branch of the noise comparison uniformly over directions and
    depends on neither s nor delta0 (both kept for contract parity; the
    caller compares the frequency against 1 - delta0/2).
    """
    if replicates < 1:
        raise DataValidationError("replicates must be >= 1")
    if not 0.0 < delta0 < 1.0:
        raise DataValidationError("delta0 must lie in (0, 1)")
    if not 1 <= s <= design.p:
        raise DataValidationError("s must lie in [1, p]")
    X = design.entries
    n, p = X.shape
    if sigma == 0.0:
        return 1.0
    ranks = np.arange(1, p + 1, dtype=float)
    thresh = NOISE_CONST * sigma * np.sqrt(np.log(2.0 * p / ranks) / n)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, n, p)))
    hits = 0
    batch = max(1, min(replicates, 20_000_000 // (n * p + 1)))
    done = 0
    while done < replicates:
        b = min(batch, replicates - done)
        eps = rng.normal(scale=sigma, size=(b, n))
        corr = np.abs(eps @ X) / n
        corr.sort(axis=1)
        hits += int(np.sum(np.all(corr[:, ::-1] <= thresh, axis=1)))
        done += b
    return hits / replicates


def epsilon_concentration_bound(n: int) -> float:
    """1 - (1 + e^2) exp(-n/24); can be negative (vacuous) for small n."""
    return 1.0 - (1.0 + math.e ** 2) * math.exp(-n / 24.0)


def monte_carlo_epsilon_concentration(
    n: int, sigma: float, replicates: int, seed: int = 0
) -> float:
    """Empirical frequency of sigma/sqrt(2) <= ||eps||_n <= 2 sigma.

    The event is scale-free in sigma: ||eps||_n / sigma is the root of a
    normalized chi-square draw.
    """
    if replicates < 1:
        raise DataValidationError("replicates must be >= 1")
    if n < 1:
        raise DataValidationError("n must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, n)))
    ratios = np.sqrt(rng.chisquare(df=n, size=replicates) / n)
    return float(np.mean((ratios >= 1.0 / SQRT2) & (ratios <= 2.0)))
