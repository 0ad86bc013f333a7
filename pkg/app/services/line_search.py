# app/services/line_search.py

"""
Armijo backtracking along a feasible direction.

The first trial step is the Lipschitz-based seed -g.p / (L ||p||^2), capped
at 0.99 of the largest step that keeps the iterate non-negative, so accepted
iterates stay strictly interior.
"""

import logging
from typing import Callable, Optional

import numpy as np

from app.core.errors import InputError, LineSearchError, NumericalError
from app.schemas.model import EndmemberMatrix
from app.schemas.solver import ArmijoParams, LineSearchResult

logger = logging.getLogger(__name__)

LIPSCHITZ_SAFETY = 1.1
GAMMA_MAX_FRACTION = 0.99


def lipschitz_estimate(M: EndmemberMatrix, iterations: int = 100) -> float:
    """
    Upper-bound estimate of the largest eigenvalue of M^T M.

    Power iteration from the all-ones vector (M is non-negative, so the
    leading eigenvector has a non-negative representative), times a 1.1
    safety factor.
    """
    if iterations < 1:
        raise InputError(f"power iterations must be >= 1, got {iterations}")

    gram = M.data.T @ M.data
    v = np.ones(gram.shape[0]) / np.sqrt(gram.shape[0])
    for _ in range(iterations):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            raise NumericalError("endmember matrix is the zero operator")
        v = w / norm

    eigenvalue = float(v @ gram @ v)
    if eigenvalue <= 0.0:
        raise NumericalError("endmember matrix is the zero operator")
    return LIPSCHITZ_SAFETY * eigenvalue


def sufficient_decrease(
        start_cost: float,
        new_cost: float,
        step: float,
        slope: float,
        sigma: float
) -> bool:
    """Armijo inequality f(x + step p) - f(x) <= sigma step grad.p."""
    return bool(new_cost - start_cost <= sigma * step * slope)


def armijo_search(
        cost_fn: Callable[[np.ndarray], float],
        grad_at_point: np.ndarray,
        point: np.ndarray,
        direction: np.ndarray,
        params: ArmijoParams,
        gamma_max: float,
        current_cost: Optional[float] = None
) -> LineSearchResult:
    """
    Largest step in {s, beta s, beta^2 s, ...} meeting the Armijo inequality.
    """
    if params.lipschitz is None:
        raise InputError("Armijo search needs a Lipschitz constant")
    if not gamma_max > 0.0:
        raise InputError(f"gamma_max must be positive, got {gamma_max}")

    start_cost = float(cost_fn(point)) if current_cost is None else float(current_cost)
    slope = float(grad_at_point @ direction)
    if not slope < 0.0:
        raise LineSearchError(
            f"not a descent direction (grad.p = {slope:.3e})",
            best_point=np.array(point, copy=True),
            best_cost=start_cost
        )

    seed = -slope / (params.lipschitz * float(direction @ direction))
    initial_step = min(seed, GAMMA_MAX_FRACTION * gamma_max)

    step = initial_step
    best_point, best_cost = np.array(point, copy=True), start_cost
    for backtracks in range(params.max_backtracks + 1):
        candidate = point + step * direction
        new_cost = float(cost_fn(candidate))
        if np.isfinite(new_cost) and sufficient_decrease(
                start_cost, new_cost, step, slope, params.sigma):
            return LineSearchResult(
                step=step,
                backtracks=backtracks,
                new_cost=new_cost,
                initial_step=initial_step,
                point=candidate
            )
        if np.isfinite(new_cost) and new_cost < best_cost:
            best_point, best_cost = candidate, new_cost
        step *= params.beta

    logger.warning(
        f"Armijo search exhausted {params.max_backtracks} backtracks "
        f"(initial step {initial_step:.3e}, grad.p {slope:.3e})"
    )
    raise LineSearchError(
        f"no sufficient decrease after {params.max_backtracks} backtracks; "
        f"cost and gradient are probably inconsistent",
        best_point=best_point,
        best_cost=best_cost
    )
