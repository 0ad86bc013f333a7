# app/services/solvers.py

"""
Scaled-gradient solvers for least-squares unmixing.

Every scheme writes the negative gradient as U - V with U, V > 0 and moves
along alpha * (U - V) / V:

* SGM: positivity only, Armijo step below the positivity bound.
* ISRA: SGM with unit step, i.e. alpha <- alpha * U / V.
* EXPONENT_MULT: alpha <- alpha * (U / V) ** n, unit step.
* NSGM: normalized split (U_r = -dJ_r - min(-dJ) + eps, V = sum_l alpha_l U_l),
  which keeps every iterate on the simplex; Armijo step.
* NSGM_FIXED_STEP: NSGM with unit step.
* FCLS_PENALIZED: SGM on the augmented system whose cost adds
  (1 / 2 delta^2) (sum(alpha) - 1)^2 to the data term.

Solvers store only alpha and use one scalar step per iteration, shared by all
components.
"""

import logging
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from app.core.config import get_settings
from app.core.errors import ConvergenceError, FeasibilityError, InputError, LineSearchError
from app.schemas.model import AbundanceVector, EndmemberMatrix, Pixel
from app.schemas.solver import (
    Algorithm,
    ArmijoParams,
    GradientSplit,
    IterationRecord,
    SolverConfig,
    SolverStatus,
    SolverTrace
)
from app.services.core_model import as_vector
from app.services.line_search import armijo_search, lipschitz_estimate

settings = get_settings()
logger = logging.getLogger(__name__)

EPSILON_SCALE = 1e-12
_JUST_ABOVE_ONE = float(np.nextafter(1.0, 2.0))

Callback = Callable[[int, np.ndarray], None]


def default_epsilon(neg_grad: np.ndarray) -> float:
    """Split offset relative to the gradient scale."""
    return EPSILON_SCALE * (1.0 + float(np.abs(neg_grad).max()))


class QuadraticProblem:
    """
    J(alpha) = 1/2 ||y - M alpha||^2 with M^T M and M^T y cached.
    """

    def __init__(self, y: np.ndarray, matrix: np.ndarray):
        self.y = np.asarray(y, dtype=np.float64)
        self.matrix = np.asarray(matrix, dtype=np.float64)
        self.gram = self.matrix.T @ self.matrix
        self.projection = self.matrix.T @ self.y

    @classmethod
    def from_pixel(cls, y: Union[Pixel, np.ndarray], M: EndmemberMatrix) -> "QuadraticProblem":
        return cls(as_vector(y, M.bands, "pixel"), M.data)

    @property
    def size(self) -> int:
        return self.gram.shape[0]

    def cost(self, alpha: np.ndarray) -> float:
        r = self.y - self.matrix @ alpha
        return 0.5 * float(r @ r)

    def neg_gradient(self, alpha: np.ndarray) -> np.ndarray:
        return self.projection - self.gram @ alpha

    def increment(self, anchor: np.ndarray, gradient: np.ndarray) -> Callable[[np.ndarray], float]:
        """
        Cost change from `anchor`, evaluated as g.d + 1/2 d^T (M^T M) d.

        Exact for the quadratic, and free of the cancellation that comparing
        two nearly equal costs suffers once the decrease falls below their
        rounding resolution.
        """
        gram = self.gram

        def delta_cost(point: np.ndarray) -> float:
            d = point - anchor
            return float(gradient @ d + 0.5 * (d @ (gram @ d)))

        return delta_cost


# -- splits -----------------------------------------------------------------

def _quadratic_parts(problem: QuadraticProblem, alpha: np.ndarray, epsilon: float):
    return problem.projection + epsilon, problem.gram @ alpha + epsilon


def _normalized_parts(neg_grad: np.ndarray, alpha: np.ndarray, epsilon: float):
    u = neg_grad - neg_grad.min() + epsilon
    # sum_l alpha_l U_l == sum_l alpha_l (-dJ_l) - min(-dJ) + eps on the simplex
    return u, float(alpha @ u)


def sgm_split_quadratic(
        y: Union[Pixel, np.ndarray],
        M: EndmemberMatrix,
        alpha: np.ndarray,
        epsilon: float
) -> GradientSplit:
    """
    U = M^T y + eps, V = M^T M alpha + eps.

    Negative bands in y are accepted as long as every entry of M^T y + eps
    stays positive (noisy pixels near zero reflectance); otherwise
    FeasibilityError.
    """
    problem = QuadraticProblem.from_pixel(y, M)
    a = as_vector(alpha, M.endmembers, "abundances")
    if np.any(a < 0.0):
        raise FeasibilityError("abundance >= 0", float(-a.min()))
    _require_positive_projection(problem, epsilon)
    u, v = _quadratic_parts(problem, a, epsilon)
    return GradientSplit(u_part=u, v_part=v)


def nsgm_split(
        neg_grad: np.ndarray,
        alpha: Union[AbundanceVector, np.ndarray],
        epsilon: float
) -> GradientSplit:
    """Normalized split whose difference is the centered negative gradient."""
    g = np.asarray(neg_grad, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise InputError("negative gradient contains non-finite entries")
    a = as_vector(alpha, g.shape[0], "abundances")
    if not epsilon > 0.0:
        raise InputError(f"epsilon must be positive, got {epsilon}")
    u, v = _normalized_parts(g, a, epsilon)
    return GradientSplit(u_part=u, v_part=np.full(g.shape[0], v))


def _require_positive_projection(problem: QuadraticProblem, epsilon: float) -> None:
    worst = float((problem.projection + epsilon).min())
    if worst <= 0.0:
        raise FeasibilityError("M^T y + eps > 0 (non-negative data)", -worst)


# -- step bounds --------------------------------------------------------------

def _step_bound(ratio: np.ndarray, restricted: np.ndarray, cap: float) -> float:
    if not restricted.any():
        return cap
    bound = float((1.0 / (1.0 - ratio[restricted])).min())
    return max(min(bound, cap), _JUST_ABOVE_ONE)


def max_step(alpha: np.ndarray, split: GradientSplit, cap: Optional[float] = None) -> float:
    """
    Largest gamma keeping alpha + gamma alpha (U - V) / V non-negative.

    Only components with U_r < V_r (and alpha_r > 0) restrict the step; the
    bound 1 / (1 - U_r / V_r) always exceeds one.
    """
    cap = settings.GAMMA_MAX_CAP if cap is None else cap
    a = np.asarray(alpha, dtype=np.float64)
    ratio = split.ratio
    return _step_bound(ratio, (ratio < 1.0) & (a > 0.0), cap)


def exponent_max_step(split: GradientSplit, n: float, cap: Optional[float] = None) -> float:
    """Positivity bound of alpha + gamma alpha ((U / V) ** n - 1)."""
    if not n > 0.0:
        raise InputError(f"exponent n must be positive, got {n}")
    cap = settings.GAMMA_MAX_CAP if cap is None else cap
    ratio = split.ratio if n == 1.0 else split.ratio ** n
    return _step_bound(ratio, ratio < 1.0, cap)


# -- single updates -----------------------------------------------------------

def _check_step(gamma: float, bound: float) -> None:
    if not 0.0 <= gamma < bound:
        raise InputError(
            f"step {gamma:.6g} outside [0, {bound:.6g}); positivity would break"
        )


def _scaled_update(alpha: np.ndarray, ratio: np.ndarray, gamma: float) -> np.ndarray:
    """
    alpha + gamma alpha (ratio - 1) evaluated as alpha * (1 + gamma (ratio - 1)).

    Below the step bound the factor is positive, so subnormal components
    shrink towards zero instead of rounding below it.
    """
    return alpha * np.maximum(1.0 + gamma * (ratio - 1.0), 0.0)


def sgm_step(alpha: np.ndarray, split: GradientSplit, gamma: float) -> np.ndarray:
    a = np.asarray(alpha, dtype=np.float64)
    _check_step(gamma, max_step(a, split))
    return _scaled_update(a, split.ratio, gamma)


def multiplicative_step(alpha: np.ndarray, split: GradientSplit, n: float = 1.0) -> np.ndarray:
    """alpha * (U / V) ** n; n = 1 is the ISRA update."""
    a = np.asarray(alpha, dtype=np.float64)
    ratio = split.ratio
    return a * (ratio if n == 1.0 else ratio ** n)


def exponent_step(alpha: np.ndarray, split: GradientSplit, gamma: float, n: float) -> np.ndarray:
    a = np.asarray(alpha, dtype=np.float64)
    _check_step(gamma, exponent_max_step(split, n))
    ratio = split.ratio if n == 1.0 else split.ratio ** n
    return _scaled_update(a, ratio, gamma)


def nsgm_step(
        alpha: Union[AbundanceVector, np.ndarray],
        neg_grad: np.ndarray,
        gamma: float,
        epsilon: float
) -> np.ndarray:
    """
    One normalized update. The direction sums to zero, so the component sum
    is preserved; the result is renormalized to remove rounding drift.
    """
    a = as_vector(alpha, np.asarray(neg_grad).shape[0], "abundances")
    split = nsgm_split(neg_grad, a, epsilon)
    _check_step(gamma, max_step(a, split))
    updated = _scaled_update(a, split.ratio, gamma)
    return updated / updated.sum()


# -- initial points -----------------------------------------------------------

def default_init(n_endmembers: int) -> np.ndarray:
    return np.full(n_endmembers, 1.0 / n_endmembers)


def random_simplex_init(n_endmembers: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw on the simplex (flat Dirichlet)."""
    return rng.dirichlet(np.ones(n_endmembers))


def _initial_point(
        init: Optional[Union[AbundanceVector, np.ndarray]],
        n_endmembers: int,
        config: SolverConfig,
        simplex: bool
) -> np.ndarray:
    if init is None:
        if config.init_seed is None:
            return default_init(n_endmembers)
        return random_simplex_init(n_endmembers, np.random.default_rng(config.init_seed))

    a = np.array(as_vector(init, n_endmembers, "initial abundances"))
    if np.any(a <= 0.0):
        raise FeasibilityError(
            "initial abundances > 0 (a multiplicative update never revives a "
            "zero component; add a small mass to it and renormalize)",
            float(max(0.0, -a.min()))
        )
    if simplex:
        a = AbundanceVector(a).values.copy()
    return a


# -- iteration loops -----------------------------------------------------------

def _with_lipschitz(params: ArmijoParams, problem: QuadraticProblem) -> ArmijoParams:
    if params.lipschitz is not None:
        return params
    operator = EndmemberMatrix(problem.matrix)
    return params.model_copy(
        update={"lipschitz": lipschitz_estimate(operator, params.power_iterations)}
    )


def _kkt_state(alpha: np.ndarray, gradient: np.ndarray) -> Tuple[float, float]:
    complementarity = float(np.abs(alpha * gradient).max())
    interior = alpha > settings.BOUNDARY_TOL
    stationarity = float(np.abs(gradient[interior]).max()) if interior.any() else 0.0
    return complementarity, stationarity


def _parts(problem: QuadraticProblem, alpha: np.ndarray, config: SolverConfig, simplex: bool):
    neg = problem.neg_gradient(alpha)
    epsilon = config.epsilon if config.epsilon is not None else default_epsilon(neg)
    if simplex:
        u, v = _normalized_parts(neg, alpha, epsilon)
    else:
        u, v = _quadratic_parts(problem, alpha, epsilon)
    return u, v


def _record(trace, alpha, cost, step, gamma_max, complementarity) -> None:
    frozen = np.array(alpha)
    frozen.setflags(write=False)
    trace.append(IterationRecord(
        iterate=frozen,
        cost=cost,
        step=step,
        gamma_max=gamma_max,
        max_complementarity=complementarity,
        component_sum=float(alpha.sum())
    ))


def _iterate(
        problem: QuadraticProblem,
        alpha: np.ndarray,
        config: SolverConfig,
        algorithm: Algorithm,
        simplex: bool,
        armijo: bool,
        exponent: float = 1.0,
        callback: Optional[Callback] = None
) -> Tuple[np.ndarray, SolverTrace]:
    """
    Shared loop. Armijo-stepped runs track the cost through the exact
    increments accepted by the line search, which keeps the recorded
    sequence non-increasing; fixed-step runs record the cost directly.
    """
    trace = SolverTrace(algorithm=algorithm)
    params = _with_lipschitz(config.armijo, problem) if armijo else config.armijo
    if not simplex:
        epsilon = config.epsilon if config.epsilon is not None else default_epsilon(problem.neg_gradient(alpha))
        _require_positive_projection(problem, epsilon)

    cost = problem.cost(alpha)
    step, gamma_max, change = 0.0, 0.0, np.inf
    debug = logger.isEnabledFor(logging.DEBUG)

    for k in range(config.max_iters + 1):
        u, v = _parts(problem, alpha, config, simplex)
        if not np.all(u > 0.0) or not np.all(v > 0.0):
            raise FeasibilityError("M^T y + eps > 0 (non-negative data)", float(-min(np.min(u), np.min(v))))
        difference = u - v
        gradient = -difference
        complementarity, stationarity = _kkt_state(alpha, gradient)
        _record(trace, alpha, cost, step, gamma_max, complementarity)
        if callback is not None:
            callback(k, alpha)
        if debug:
            logger.debug(
                f"{algorithm.value} k={k} cost={cost:.12e} step={step:.3e} "
                f"gamma_max={gamma_max:.3e} kkt={complementarity:.3e}"
            )

        if complementarity < config.tol_kkt and stationarity < config.tol_kkt:
            trace.status = SolverStatus.CONVERGED_KKT
            break
        if change < config.tol_step:
            trace.status = SolverStatus.CONVERGED_STEP
            break
        if k == config.max_iters:
            trace.status = SolverStatus.MAX_ITERS
            break

        direction = alpha * difference / v
        split_ratio = u / v
        restricted = (split_ratio < 1.0) & (alpha > 0.0)

        if armijo:
            gamma_max = _step_bound(split_ratio, restricted, settings.GAMMA_MAX_CAP)
            if not float(gradient @ direction) < 0.0:
                # direction vanished to rounding: nothing left to gain
                trace.status = SolverStatus.CONVERGED_STEP
                break
            try:
                result = armijo_search(
                    problem.increment(alpha, gradient),
                    gradient,
                    alpha,
                    direction,
                    params,
                    gamma_max,
                    current_cost=0.0
                )
            except LineSearchError as e:
                logger.warning(f"{algorithm.value} stopped at iteration {k}: {e.detail}")
                raise ConvergenceError(
                    f"{algorithm.value} line search failed at iteration {k}: {e.detail}", trace=trace
                ) from e
            trace.backtracks += result.backtracks
            step = result.step
            updated = _scaled_update(alpha, split_ratio, step)
            cost = cost + result.new_cost
        else:
            if exponent == 1.0:
                gamma_max = _step_bound(split_ratio, restricted, settings.GAMMA_MAX_CAP)
                updated = alpha * split_ratio
            else:
                powered = split_ratio ** exponent
                gamma_max = _step_bound(powered, powered < 1.0, settings.GAMMA_MAX_CAP)
                updated = alpha * powered
            step = 1.0

        if simplex:
            updated = updated / updated.sum()
        if not armijo:
            cost = problem.cost(updated)
        change = float(np.abs(updated - alpha).max())
        alpha = updated

    logger.debug(
        f"{algorithm.value} finished: status={trace.status.value} "
        f"iterations={trace.iterations} cost={cost:.6e}"
    )
    return alpha, trace


# -- public solvers -----------------------------------------------------------

def _config(config: Optional[SolverConfig], algorithm: Algorithm) -> SolverConfig:
    if config is None:
        return SolverConfig(algorithm=algorithm)
    return config


def nsgm_solve(
        y: Union[Pixel, np.ndarray],
        M: EndmemberMatrix,
        init: Optional[Union[AbundanceVector, np.ndarray]] = None,
        config: Optional[SolverConfig] = None,
        callback: Optional[Callback] = None
) -> Tuple[AbundanceVector, SolverTrace]:
    """Positivity and sum-to-one, Armijo steps; every iterate is on the simplex."""
    config = _config(config, Algorithm.NSGM)
    problem = QuadraticProblem.from_pixel(y, M)
    alpha = _initial_point(init, M.endmembers, config, simplex=True)
    alpha, trace = _iterate(problem, alpha, config, Algorithm.NSGM, simplex=True, armijo=True, callback=callback)
    return AbundanceVector(alpha), trace


def nsgm_fixed_step_solve(
        y: Union[Pixel, np.ndarray],
        M: EndmemberMatrix,
        init: Optional[Union[AbundanceVector, np.ndarray]] = None,
        config: Optional[SolverConfig] = None,
        callback: Optional[Callback] = None
) -> Tuple[AbundanceVector, SolverTrace]:
    """Normalized multiplicative update alpha_r <- alpha_r U_r / V."""
    config = _config(config, Algorithm.NSGM_FIXED_STEP)
    problem = QuadraticProblem.from_pixel(y, M)
    alpha = _initial_point(init, M.endmembers, config, simplex=True)
    alpha, trace = _iterate(
        problem, alpha, config, Algorithm.NSGM_FIXED_STEP, simplex=True, armijo=False, callback=callback
    )
    return AbundanceVector(alpha), trace


def sgm_solve(
        y: Union[Pixel, np.ndarray],
        M: EndmemberMatrix,
        init: Optional[np.ndarray] = None,
        config: Optional[SolverConfig] = None,
        callback: Optional[Callback] = None
) -> Tuple[np.ndarray, SolverTrace]:
    """Positivity only, Armijo steps."""
    config = _config(config, Algorithm.SGM)
    problem = QuadraticProblem.from_pixel(y, M)
    alpha = _initial_point(init, M.endmembers, config, simplex=False)
    return _iterate(problem, alpha, config, Algorithm.SGM, simplex=False, armijo=True, callback=callback)


def isra_solve(
        y: Union[Pixel, np.ndarray],
        M: EndmemberMatrix,
        init: Optional[np.ndarray] = None,
        config: Optional[SolverConfig] = None,
        callback: Optional[Callback] = None
) -> Tuple[np.ndarray, SolverTrace]:
    """alpha <- alpha * (M^T y + eps) / (M^T M alpha + eps)."""
    config = _config(config, Algorithm.ISRA)
    problem = QuadraticProblem.from_pixel(y, M)
    alpha = _initial_point(init, M.endmembers, config, simplex=False)
    return _iterate(problem, alpha, config, Algorithm.ISRA, simplex=False, armijo=False, callback=callback)


def exponent_mult_solve(
        y: Union[Pixel, np.ndarray],
        M: EndmemberMatrix,
        init: Optional[np.ndarray] = None,
        n: Optional[float] = None,
        config: Optional[SolverConfig] = None,
        callback: Optional[Callback] = None
) -> Tuple[np.ndarray, SolverTrace]:
    """
    alpha <- alpha * (U / V) ** n with unit step.

    n > 1 lengthens the step near convergence, 0 < n < 1 shortens it;
    monotone descent is not guaranteed for any n != 1.
    """
    config = _config(config, Algorithm.EXPONENT_MULT)
    n = config.exponent_n if n is None else float(n)
    if not n > 0.0:
        raise InputError(f"exponent n must be positive, got {n}")
    problem = QuadraticProblem.from_pixel(y, M)
    alpha = _initial_point(init, M.endmembers, config, simplex=False)
    return _iterate(
        problem, alpha, config, Algorithm.EXPONENT_MULT,
        simplex=False, armijo=False, exponent=n, callback=callback
    )


def augmented_system(
        y: Union[Pixel, np.ndarray],
        M: EndmemberMatrix,
        delta: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    N = [sqrt(2) delta M; 1^T], s = [sqrt(2) delta y; 1].

    1/2 ||s - N alpha||^2 = delta^2 (||y - M alpha||^2 + (sum(alpha) - 1)^2 / (2 delta^2)).
    """
    if not delta > 0.0:
        raise InputError(f"delta must be positive, got {delta}")
    yv = as_vector(y, M.bands, "pixel")
    weight = np.sqrt(2.0) * delta
    stacked = np.vstack([weight * M.data, np.ones((1, M.endmembers))])
    target = np.concatenate([weight * yv, [1.0]])
    return target, stacked


def penalized_cost(
        y: Union[Pixel, np.ndarray],
        M: EndmemberMatrix,
        alpha: np.ndarray,
        delta: float
) -> float:
    """||y - M alpha||^2 + (sum(alpha) - 1)^2 / (2 delta^2)."""
    yv = as_vector(y, M.bands, "pixel")
    a = as_vector(alpha, M.endmembers, "abundances")
    r = yv - M.data @ a
    return float(r @ r) + (float(a.sum()) - 1.0) ** 2 / (2.0 * delta ** 2)


def _penalty_schedule(delta: float, delta_start: float) -> List[float]:
    stages = []
    current = max(delta_start, delta)
    while current > delta * (1.0 + 1e-9):
        stages.append(current)
        current /= 10.0
    stages.append(delta)
    return stages


def fcls_penalized_solve(
        y: Union[Pixel, np.ndarray],
        M: EndmemberMatrix,
        init: Optional[np.ndarray] = None,
        delta: Optional[float] = None,
        config: Optional[SolverConfig] = None,
        callback: Optional[Callback] = None
) -> Tuple[np.ndarray, SolverTrace]:
    """
    Sum-to-one through a quadratic penalty, positivity through SGM.

    Small delta makes the augmented system stiff along the all-ones
    direction, so the penalty is tightened in decades from `delta_start`,
    each stage warm-started from the previous one and sharing the
    `max_iters` budget. Recorded costs are the penalized cost of the stage.
    The result only approximately sums to one.
    """
    config = _config(config, Algorithm.FCLS_PENALIZED)
    delta = config.delta if delta is None else float(delta)
    alpha = _initial_point(init, M.endmembers, config, simplex=False)
    stages = _penalty_schedule(delta, config.delta_start)

    trace = SolverTrace(algorithm=Algorithm.FCLS_PENALIZED)
    budget = config.max_iters
    for index, stage_delta in enumerate(stages):
        stages_left = len(stages) - index
        stage_budget = max(1, budget if stages_left == 1 else budget // stages_left)
        target, stacked = augmented_system(y, M, stage_delta)
        problem = QuadraticProblem(target, stacked)
        stage_config = config.model_copy(update={
            "max_iters": stage_budget,
            "armijo": config.armijo.model_copy(update={"lipschitz": None})
        })
        alpha, stage_trace = _iterate(
            problem, alpha, stage_config, Algorithm.FCLS_PENALIZED,
            simplex=False, armijo=True, callback=callback
        )
        logger.debug(
            f"fcls stage delta={stage_delta:.1e}: {stage_trace.status.value} "
            f"after {stage_trace.iterations} iterations"
        )

        scale = 1.0 / stage_delta ** 2
        records = stage_trace.records if index == 0 else stage_trace.records[1:]
        for record in records:
            trace.append(IterationRecord(
                iterate=record.iterate,
                cost=record.cost * scale,
                step=record.step,
                gamma_max=record.gamma_max,
                max_complementarity=record.max_complementarity,
                component_sum=record.component_sum
            ))
        trace.backtracks += stage_trace.backtracks
        trace.status = stage_trace.status
        budget = max(0, budget - stage_trace.iterations)

    return alpha, trace


def solve(
        y: Union[Pixel, np.ndarray],
        M: EndmemberMatrix,
        config: SolverConfig,
        init: Optional[np.ndarray] = None,
        callback: Optional[Callback] = None
) -> Tuple[np.ndarray, SolverTrace]:
    """Run the algorithm named by `config`; abundances come back as a plain vector."""
    if config.algorithm == Algorithm.NSGM:
        alpha, trace = nsgm_solve(y, M, init, config, callback)
        return alpha.values, trace
    if config.algorithm == Algorithm.NSGM_FIXED_STEP:
        alpha, trace = nsgm_fixed_step_solve(y, M, init, config, callback)
        return alpha.values, trace
    if config.algorithm == Algorithm.SGM:
        return sgm_solve(y, M, init, config, callback)
    if config.algorithm == Algorithm.ISRA:
        return isra_solve(y, M, init, config, callback)
    if config.algorithm == Algorithm.EXPONENT_MULT:
        return exponent_mult_solve(y, M, init, config.exponent_n, config, callback)
    if config.algorithm == Algorithm.FCLS_PENALIZED:
        return fcls_penalized_solve(y, M, init, config.delta, config, callback)
    raise InputError(f"unknown algorithm {config.algorithm}")
