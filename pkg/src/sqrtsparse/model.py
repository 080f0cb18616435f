"""Regression problem containers, empirical norms, and column normalization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NORMALIZATION_TOL = 1e-12


class DataValidationError(ValueError):
    """Raised for malformed numeric inputs (shape, NaN/Inf, empty)."""


class DimensionMismatchError(DataValidationError):
    """Raised when vector/matrix shapes are inconsistent."""


class DegenerateColumnError(DataValidationError):
    """Raised when a design column is identically zero."""


def _as_finite_array(a, name: str, ndim: int) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim != ndim:
        raise DataValidationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise DataValidationError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise DataValidationError(f"{name} contains NaN or Inf entries")
    return arr


def empirical_norm(v) -> float:
    """Root mean square of a vector: sqrt((1/n) * sum v_i^2)."""
    arr = _as_finite_array(v, "vector", 1)
    return float(np.sqrt(np.mean(arr * arr)))


@dataclass(frozen=True)
class DesignMatrix:
    """Dense n-by-p design with column-normalization metadata.

    ``scale_factors`` records the per-column divisors applied by
    :func:`normalize_columns` so callers can map coefficients back to the
    original scale; it is None for matrices built directly from data.
    """

    entries: np.ndarray
    scale_factors: np.ndarray | None = None
    normalized: bool = field(init=False)

    def __post_init__(self):
        arr = _as_finite_array(self.entries, "design matrix", 2)
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)
        if self.scale_factors is not None:
            f = _as_finite_array(self.scale_factors, "scale factors", 1)
            if f.shape[0] != arr.shape[1]:
                raise DimensionMismatchError("one scale factor per column required")
            f.setflags(write=False)
            object.__setattr__(self, "scale_factors", f)
        max_norm, ok = check_normalization_entries(arr)
        object.__setattr__(self, "normalized", ok)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def p(self) -> int:
        return self.entries.shape[1]

    def column_norms(self) -> np.ndarray:
        """Empirical norms of all columns."""
        return np.sqrt(np.mean(self.entries * self.entries, axis=0))


def check_normalization_entries(entries: np.ndarray) -> tuple[float, bool]:
    norms = np.sqrt(np.mean(entries * entries, axis=0))
    max_norm = float(norms.max())
    return max_norm, max_norm <= 1.0 + NORMALIZATION_TOL


def check_normalization(design: DesignMatrix) -> tuple[float, bool]:
    """Largest column empirical norm and whether it is within 1 + 1e-12."""
    return check_normalization_entries(design.entries)


def normalize_columns(design: DesignMatrix) -> DesignMatrix:
    """Rescale every column to empirical norm exactly 1.

    Raises :class:`DegenerateColumnError` when a column is identically
    zero. Idempotent up to floating rounding; scale factors compose.
    """
    norms = design.column_norms()
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DegenerateColumnError(f"column {int(zero[0])} is identically zero")
    scaled = design.entries / norms
    previous = design.scale_factors if design.scale_factors is not None else np.ones(design.p)
    return DesignMatrix(entries=scaled, scale_factors=previous * norms)


@dataclass(frozen=True)
class RegressionData:
    """A design matrix together with its response vector."""

    design: DesignMatrix
    response: np.ndarray

    def __post_init__(self):
        y = _as_finite_array(self.response, "response", 1)
        if y.shape[0] != self.design.n:
            raise DimensionMismatchError(
                f"response length {y.shape[0]} != sample count {self.design.n}"
            )
        y = np.ascontiguousarray(y)
        y.setflags(write=False)
        object.__setattr__(self, "response", y)

    @property
    def n(self) -> int:
        return self.design.n

    @property
    def p(self) -> int:
        return self.design.p


@dataclass(frozen=True)
class GroundTruth:
    """Known simulation truth: coefficients, noise scale, sparsity."""

    beta_star: np.ndarray
    sigma: float
    sparsity: int = field(init=False)

    def __post_init__(self):
        b = _as_finite_array(self.beta_star, "beta_star", 1)
        b.setflags(write=False)
        object.__setattr__(self, "beta_star", b)
        if self.sigma < 0:
            raise DataValidationError("sigma must be nonnegative")
        object.__setattr__(self, "sparsity", int(np.count_nonzero(b)))


def residual(data: RegressionData, beta) -> np.ndarray:
    """Y - X beta."""
    b = _as_finite_array(beta, "beta", 1)
    if b.shape[0] != data.p:
        raise DimensionMismatchError(f"beta length {b.shape[0]} != dimension {data.p}")
    return data.response - data.design.entries @ b


def load_design_csv(path) -> DesignMatrix:
    """Read a plain numeric CSV (no header, one row per sample)."""
    try:
        arr = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise DataValidationError(f"could not parse design CSV {path}: {exc}") from exc
    return DesignMatrix(entries=arr)


def load_response_csv(path) -> np.ndarray:
    """Read a response CSV with one value per line."""
    try:
        arr = np.loadtxt(path, delimiter=",", ndmin=1)
    except ValueError as exc:
        raise DataValidationError(f"could not parse response CSV {path}: {exc}") from exc
    if arr.ndim != 1:
        raise DataValidationError("response CSV must hold one value per line")
    return _as_finite_array(arr, "response", 1)
