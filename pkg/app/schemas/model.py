# app/schemas/model.py

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from app.core.errors import DimensionError, FeasibilityError, InputError

# Absolute tolerance on the component sum accepted before renormalizing
SIMPLEX_INPUT_TOL = 1e-6


def _frozen_array(values, ndim: int, what: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise DimensionError(f"{what} dimensions", ndim, arr.ndim)
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{what} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EndmemberMatrix:
    """L x R matrix whose columns are endmember spectra."""

    data: np.ndarray
    names: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        arr = _frozen_array(self.data, 2, "endmember matrix")
        n_bands, n_endmembers = arr.shape
        if n_endmembers < 1 or n_bands < n_endmembers:
            raise DimensionError(
                "endmember matrix shape (L >= R >= 1)",
                "L >= R >= 1",
                arr.shape
            )
        if np.any(arr < 0.0):
            row, col = np.argwhere(arr < 0.0)[0]
            raise FeasibilityError(
                f"endmember entry [{row}, {col}] >= 0", float(-arr[row, col])
            )
        names = tuple(self.names) or tuple(f"em{r + 1}" for r in range(n_endmembers))
        if len(names) != n_endmembers:
            raise DimensionError("endmember names", n_endmembers, len(names))
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "names", names)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def endmembers(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class Pixel:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values, 1, "pixel"))

    @property
    def bands(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class AbundanceVector:
    """
    Point of the probability simplex.

    Construction accepts vectors whose sum is within SIMPLEX_INPUT_TOL of one
    and renormalizes them exactly; use `normalized` for arbitrary positive
    vectors.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(_frozen_array(self.values, 1, "abundance vector"))
        if arr.size < 1:
            raise DimensionError("abundance vector length", ">= 1", 0)
        if np.any(arr < 0.0):
            raise FeasibilityError("abundance >= 0", float(-arr.min()))
        total = arr.sum()
        if abs(total - 1.0) > SIMPLEX_INPUT_TOL:
            raise FeasibilityError("abundances sum to one", abs(total - 1.0))
        arr = arr / total
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def normalized(cls, values) -> "AbundanceVector":
        arr = np.asarray(values, dtype=np.float64)
        total = arr.sum()
        if not np.isfinite(total) or total <= 0.0:
            raise FeasibilityError("positive component sum", float(abs(total)))
        return cls(arr / total)

    @classmethod
    def uniform(cls, n_endmembers: int) -> "AbundanceVector":
        return cls(np.full(n_endmembers, 1.0 / n_endmembers))

    @property
    def size(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean white Gaussian noise of standard deviation sigma."""

    sigma: float
    seed: Optional[int] = None

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma < 0.0:
            raise InputError(f"noise sigma must be finite and >= 0, got {self.sigma}")


@dataclass(frozen=True)
class KKTReport:
    multipliers: np.ndarray
    complementarity: np.ndarray
    max_complementarity: float
    stationarity_residual: float
    feasibility_violation: float

    def __post_init__(self):
        for name in ("multipliers", "complementarity"):
            object.__setattr__(
                self, name, _frozen_array(getattr(self, name), 1, name)
            )
