# app/services/core_model.py

"""
Linear mixing model y = M alpha + e, its least-squares cost and the KKT
audit shared by every solver.

Sign convention: `negative_gradient` returns M^T (y - M alpha), the opposite
of the gradient of J(alpha) = 1/2 ||y - M alpha||^2. All solver formulas
consume it under that convention.
"""

import logging
from typing import Union

import numpy as np

from app.core.config import get_settings
from app.core.errors import DimensionError, FeasibilityError, InputError
from app.schemas.model import (
    AbundanceVector,
    EndmemberMatrix,
    KKTReport,
    Pixel,
    SIMPLEX_INPUT_TOL
)

settings = get_settings()
logger = logging.getLogger(__name__)

VectorLike = Union[np.ndarray, AbundanceVector, Pixel, list, tuple]


def as_vector(values: VectorLike, size: int, what: str) -> np.ndarray:
    """Coerce to a float64 vector of the expected length."""
    if isinstance(values, AbundanceVector):
        values = values.values
    elif isinstance(values, Pixel):
        values = values.values
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != size:
        raise DimensionError(what, f"length {size}", f"shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{what} contains non-finite entries")
    return arr


def _operands(y: VectorLike, M: EndmemberMatrix, alpha: VectorLike):
    m = M.data
    return (
        as_vector(y, m.shape[0], "pixel"),
        m,
        as_vector(alpha, m.shape[1], "abundances")
    )


def residual(y: VectorLike, M: EndmemberMatrix, alpha: VectorLike) -> np.ndarray:
    yv, m, a = _operands(y, M, alpha)
    return yv - m @ a


def least_squares_cost(y: VectorLike, M: EndmemberMatrix, alpha: VectorLike) -> float:
    """J(alpha) = 1/2 ||y - M alpha||^2."""
    r = residual(y, M, alpha)
    return 0.5 * float(r @ r)


def negative_gradient(y: VectorLike, M: EndmemberMatrix, alpha: VectorLike) -> np.ndarray:
    """-grad J(alpha) = M^T (y - M alpha)."""
    return M.data.T @ residual(y, M, alpha)


def centered_gradient(gradient: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """
    Reduced gradient on the simplex: g_r - sum_l alpha_l g_l.

    Adding a constant to every component of `gradient` leaves it unchanged
    when alpha sums to one.
    """
    return gradient - float(alpha @ gradient)


def kkt_report(
        y: VectorLike,
        M: EndmemberMatrix,
        alpha: VectorLike,
        simplex: bool = True
) -> KKTReport:
    """
    Audit first-order optimality of alpha.

    With `simplex` unset the constraint set is alpha >= 0; with it set,
    alpha >= 0 and sum(alpha) = 1, and the gradient is replaced by its
    centered (reduced) form. Multipliers are the gradient components
    themselves, since the constraint function g(alpha) = alpha has unit slope.
    """
    yv, m, a = _operands(y, M, alpha)

    negativity = float(max(0.0, -a.min()))
    if negativity > 0.0:
        raise FeasibilityError("abundance >= 0", negativity)
    sum_violation = abs(float(a.sum()) - 1.0) if simplex else 0.0
    if sum_violation > SIMPLEX_INPUT_TOL:
        raise FeasibilityError("abundances sum to one", sum_violation)

    gradient = -(m.T @ (yv - m @ a))
    if simplex:
        gradient = centered_gradient(gradient, a)

    complementarity = a * gradient
    interior = a > settings.BOUNDARY_TOL
    stationarity = float(np.abs(gradient[interior]).max()) if interior.any() else 0.0

    return KKTReport(
        multipliers=gradient,
        complementarity=complementarity,
        max_complementarity=float(np.abs(complementarity).max()),
        stationarity_residual=stationarity,
        feasibility_violation=max(negativity, sum_violation)
    )
