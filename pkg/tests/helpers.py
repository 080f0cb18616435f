"""Shared synthetic-instance builders for the test suite."""

from __future__ import annotations

import numpy as np

from sqrtsparse import DesignMatrix, RegressionData, normalize_columns


def gaussian_design(n: int, p: int, seed: int) -> DesignMatrix:
    rng = np.random.default_rng(seed)
    return normalize_columns(DesignMatrix(entries=rng.normal(size=(n, p))))


def make_instance(n, p, s, sigma, seed, amplitude=3.0, support="random"):
    """Returns (data, beta_star, eps) with a normalized Gaussian design."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    X /= np.sqrt(np.mean(X * X, axis=0))
    beta_star = np.zeros(p)
    if support == "random":
        idx = rng.choice(p, size=s, replace=False)
    else:
        idx = np.arange(s)
    beta_star[idx] = rng.choice([-amplitude, amplitude], size=s)
    eps = sigma * rng.normal(size=n)
    y = X @ beta_star + eps
    data = RegressionData(design=DesignMatrix(entries=X), response=y)
    return data, beta_star, eps
