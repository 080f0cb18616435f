"""Tuning-parameter formulas, the sorted-L1 norm, its prox, and dual tests.

The prox kernel (pool-adjacent-violators on the sorted magnitudes) has a
compiled implementation; the pure-python fallback is selected at import
when the extension is unavailable or ``SQRTSPARSE_PURE_PYTHON`` is set.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .model import DataValidationError, DimensionMismatchError
from . import _prox_py

if os.environ.get("SQRTSPARSE_PURE_PYTHON"):
    _kernel = _prox_py
else:
    try:
        from . import _prox_fast as _kernel  # type: ignore[no-redef]
    except ImportError:
        _kernel = _prox_py


def prox_backend() -> str:
    """Name of the active prox kernel: 'compiled' or 'python'."""
    return "compiled" if _kernel.__name__.endswith("_prox_fast") else "python"


@dataclass(frozen=True)
class LambdaSequence:
    """Nonincreasing positive weights for the sorted-L1 norm."""

    weights: np.ndarray
    gamma: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise DataValidationError("weights must be a nonempty vector")
        if not np.all(np.isfinite(w)):
            raise DataValidationError("weights contain NaN or Inf")
        if w[-1] <= 0.0:
            raise DataValidationError("weights must be strictly positive")
        if np.any(np.diff(w) > 0.0):
            raise DataValidationError("weights must be nonincreasing")
        if self.gamma <= 0.0:
            raise DataValidationError("gamma must be positive")
        w = np.ascontiguousarray(w)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def p(self) -> int:
        return self.weights.shape[0]


def sqrt_lasso_lambda(n: int, p: int, s: int, gamma: float) -> float:
    """Scalar tuning parameter gamma * sqrt(log(2p/s) / n)."""
    if not 1 <= s <= p:
        raise DataValidationError(f"sparsity level s={s} must lie in [1, p={p}]")
    if n < 1 or gamma <= 0:
        raise DataValidationError("need n >= 1 and gamma > 0")
    return gamma * math.sqrt(math.log(2.0 * p / s) / n)


def sqrt_slope_lambdas(n: int, p: int, gamma_prime: float) -> LambdaSequence:
    """Weight sequence gamma' * sqrt(log(2p/j) / n), j = 1..p."""
    if n < 1 or p < 1:
        raise DataValidationError("need n >= 1 and p >= 1")
    if gamma_prime <= 0:
        raise DataValidationError("gamma_prime must be positive")
    j = np.arange(1, p + 1, dtype=float)
    w = gamma_prime * np.sqrt(np.log(2.0 * p / j) / n)
    return LambdaSequence(weights=w, gamma=gamma_prime)


def _check_lengths(v: np.ndarray, lambdas: LambdaSequence):
    if v.shape[0] != lambdas.p:
        raise DimensionMismatchError(
            f"vector length {v.shape[0]} != weight length {lambdas.p}"
        )


def sorted_l1_norm(v, lambdas: LambdaSequence) -> float:
    """Sum of lambda_j times the j-th largest |v| entry."""
    arr = np.asarray(v, dtype=float)
    _check_lengths(arr, lambdas)
    mags = np.sort(np.abs(arr))[::-1]
    return float(mags @ lambdas.weights)


def lambda_sum_bounds(n: int, p: int, s: int, gamma_prime: float) -> tuple[float, float, float]:
    """(lower, upper, actual) for sqrt(sum of the s largest squared weights).

    lower = gamma' sqrt((s/n) log(2p/s)), upper the same with log(2ep/s);
    actual is computed by direct summation of the weight sequence.
    """
    if not 1 <= s <= p:
        raise DataValidationError(f"sparsity level s={s} must lie in [1, p={p}]")
    seq = sqrt_slope_lambdas(n, p, gamma_prime)
    actual = float(np.sqrt(np.sum(seq.weights[:s] ** 2)))
    lower = gamma_prime * math.sqrt(s / n * math.log(2.0 * p / s))
    upper = gamma_prime * math.sqrt(s / n * math.log(2.0 * math.e * p / s))
    return lower, upper, actual


def soft_threshold(v, t: float) -> np.ndarray:
    """Componentwise sign(v) * max(|v| - t, 0)."""
    if t < 0:
        raise DataValidationError("threshold must be nonnegative")
    arr = np.asarray(v, dtype=float)
    return np.sign(arr) * np.maximum(np.abs(arr) - t, 0.0)


def prox_weighted_sorted_l1(v: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Minimizer of 0.5||x - v||^2 + sum_j weights_j |x|_(j).

    Raw-weight entry point used by the solvers (weights already folded
    with the step size and noise scale). Sort the magnitudes, shift by
    the weights, restore monotone nonnegativity, unsort, restore signs.
    Ties in |v| are broken by original index (stable sort); any
    tie-break yields the same prox value.
    """
    av = np.abs(v)
    order = np.argsort(-av, kind="stable")
    z = av[order] - weights
    m = _kernel.decreasing_nonneg_projection(np.ascontiguousarray(z))
    x = np.empty_like(v)
    x[order] = m
    return np.sign(v) * x


def prox_sorted_l1(v, lambdas: LambdaSequence, t: float) -> np.ndarray:
    """Prox of t times the sorted-L1 norm at v."""
    if t < 0:
        raise DataValidationError("prox scale t must be nonnegative")
    arr = np.asarray(v, dtype=float)
    _check_lengths(arr, lambdas)
    if t == 0:
        return arr.copy()
    return prox_weighted_sorted_l1(arr, t * lambdas.weights)


def slope_dual_feasible(g, lambdas: LambdaSequence, tol: float = 1e-8) -> bool:
    """Unit-ball test for the norm dual to the sorted-L1 norm.

    True iff every partial sum of the decreasingly sorted |g| is at most
    the matching partial sum of the weights, up to tol.
    """
    arr = np.asarray(g, dtype=float)
    _check_lengths(arr, lambdas)
    cg = np.cumsum(np.sort(np.abs(arr))[::-1])
    cl = np.cumsum(lambdas.weights)
    return bool(np.all(cg <= cl + tol))


def sorted_l1_dual_violation(g: np.ndarray, weights: np.ndarray) -> float:
    """Largest positive excess of sorted-|g| partial sums over weight partial sums."""
    cg = np.cumsum(np.sort(np.abs(g))[::-1])
    cl = np.cumsum(weights)
    return float(max(np.max(cg - cl), 0.0))
