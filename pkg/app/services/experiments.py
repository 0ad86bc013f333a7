# app/services/experiments.py

"""
Synthetic pixels and cubes, Monte Carlo statistics and cube unmixing.

Random streams are keyed, never shared: the noise of run k at SNR index s
comes from SeedSequence((seed, s, k, 0)) and is the same for every solver;
the random start of solver j comes from SeedSequence((seed, s, k, j + 1)).
Reports therefore do not depend on worker count or scheduling.
"""

import logging
from collections import Counter
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import get_settings
from app.core.errors import ConfigError, DimensionError, InputError, PixelFailureError, UnmixError
from app.schemas.experiment import CellStats, CubeResult, ExperimentSpec, MonteCarloReport
from app.schemas.model import AbundanceVector, EndmemberMatrix, NoiseModel, Pixel
from app.schemas.solver import Algorithm, SolverConfig, SolverStatus
from app.services.core_model import as_vector, least_squares_cost
from app.services.dispatch import TaskManager, TaskStatus
from app.services.solvers import random_simplex_init, solve
from app.services.spectra import load_endmembers

settings = get_settings()
logger = logging.getLogger(__name__)

FAILED_PIXEL = -1.0
REFERENCE_ALPHA = (0.3, 0.6, 0.1)
REFERENCE_SNR_GRID = (-10.0, 0.0, 10.0, 20.0)


def noise_sigma(M: EndmemberMatrix, alpha: np.ndarray, snr_db: float) -> float:
    """sigma with 10 log10(||M alpha||^2 / (L sigma^2)) = snr_db; 0 for +inf."""
    signal = M.data @ alpha
    energy = float(signal @ signal)
    if energy == 0.0:
        raise InputError("M alpha is zero; SNR is undefined")
    if np.isposinf(snr_db):
        return 0.0
    return float(np.sqrt(energy / (M.bands * 10.0 ** (snr_db / 10.0))))


def synthesize_pixel(
        M: EndmemberMatrix,
        alpha_true: AbundanceVector,
        snr_db: float,
        rng: np.random.Generator,
        seed: Optional[int] = None
) -> Tuple[Pixel, NoiseModel]:
    """y = M alpha_true + e, e ~ N(0, sigma^2 I)."""
    alpha = as_vector(alpha_true, M.endmembers, "alpha_true")
    sigma = noise_sigma(M, alpha, snr_db)
    clean = M.data @ alpha
    if sigma == 0.0:
        return Pixel(clean), NoiseModel(sigma=0.0, seed=seed)
    return Pixel(clean + sigma * rng.standard_normal(M.bands)), NoiseModel(sigma=sigma, seed=seed)


def synthesize_cube(
        M: EndmemberMatrix,
        width: int,
        height: int,
        snr_db: float,
        rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cube (bands x height x width) with per-pixel abundances drawn uniformly on
    the simplex, plus the truth maps (R x height x width).
    """
    if width < 1 or height < 1:
        raise InputError(f"cube size must be positive, got {width} x {height}")
    truth = rng.dirichlet(np.ones(M.endmembers), size=(height, width))
    cube = np.empty((M.bands, height, width))
    for i in range(height):
        for j in range(width):
            pixel, _ = synthesize_pixel(M, AbundanceVector(truth[i, j]), snr_db, rng)
            cube[:, i, j] = pixel.values
    return cube, np.moveaxis(truth, -1, 0)


def solver_labels(configs: Sequence[SolverConfig]) -> List[str]:
    """Readable unique names, e.g. 'nsgm', 'fcls[delta=1e-02]', 'expmult[n=2]'."""
    labels = []
    for config in configs:
        label = config.algorithm.value
        if config.algorithm == Algorithm.FCLS_PENALIZED:
            label = f"{label}[delta={config.delta:.0e}]"
        elif config.algorithm == Algorithm.EXPONENT_MULT:
            label = f"{label}[n={config.exponent_n:g}]"
        labels.append(label)

    counts = Counter(labels)
    seen: Counter = Counter()
    unique = []
    for label in labels:
        seen[label] += 1
        unique.append(f"{label}#{seen[label]}" if counts[label] > 1 else label)
    return unique


def _stream(seed: int, snr_index: int, run: int, slot: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, snr_index, run, slot)))


def _run_once(
        M: EndmemberMatrix,
        alpha_true: np.ndarray,
        snr_db: float,
        snr_index: int,
        run: int,
        spec: ExperimentSpec
) -> List[dict]:
    """One noise realization, every solver on it."""
    pixel, _ = synthesize_pixel(
        M, AbundanceVector(alpha_true), snr_db, _stream(spec.seed, snr_index, run, 0)
    )
    results = []
    for j, config in enumerate(spec.solvers):
        init = None
        if spec.random_init:
            init = random_simplex_init(M.endmembers, _stream(spec.seed, snr_index, run, j + 1))
        try:
            estimate, trace = solve(pixel, M, config, init=init)
        except UnmixError as e:
            results.append({"error": str(e)})
            continue
        results.append({
            "estimate": np.asarray(estimate, dtype=np.float64),
            "cost": least_squares_cost(pixel, M, estimate),
            "iterations": trace.iterations,
            "status": trace.status.value
        })
    return results


def _cell(
        label: str,
        config: SolverConfig,
        snr_db: float,
        outcomes: List[Optional[dict]],
        n_endmembers: int
) -> CellStats:
    good = [o for o in outcomes if o is not None and "estimate" in o]
    failures = len(outcomes) - len(good)
    status_counts = {status.value: 0 for status in SolverStatus}
    for o in good:
        status_counts[o["status"]] += 1

    if good:
        estimates = np.array([o["estimate"] for o in good])
        mean = estimates.mean(axis=0)
        variance = estimates.var(axis=0, ddof=1) if len(good) > 1 else np.zeros(n_endmembers)
        mean_cost = float(np.mean([o["cost"] for o in good]))
        mean_iters = float(np.mean([o["iterations"] for o in good]))
        violation = float(np.mean(np.abs(estimates.sum(axis=1) - 1.0)))
    else:
        logger.warning(f"Every run of {label} at {snr_db} dB failed")
        estimates = np.empty((0, n_endmembers))
        mean = variance = np.full(n_endmembers, np.nan)
        mean_cost = mean_iters = violation = float("nan")

    return CellStats(
        solver=label,
        algorithm=config.algorithm,
        snr_db=snr_db,
        mean=mean.tolist(),
        variance=variance.tolist(),
        mean_cost=mean_cost,
        mean_iters=mean_iters,
        mean_sum_violation=violation,
        failures=failures,
        status_counts=status_counts,
        estimates=estimates.tolist()
    )


def run_monte_carlo(
        spec: ExperimentSpec,
        M: Optional[EndmemberMatrix] = None,
        n_jobs: Optional[int] = None
) -> MonteCarloReport:
    """
    Every (SNR, run) pair draws one noise realization shared by all solvers.
    Failed solver runs are left out of the statistics and counted.
    """
    M = M if M is not None else load_endmembers(spec.endmembers)
    alpha_true = np.asarray(spec.alpha_true, dtype=np.float64)
    if alpha_true.size != M.endmembers:
        raise DimensionError("alpha_true length", M.endmembers, alpha_true.size)
    labels = solver_labels(spec.solvers)

    logger.info(
        f"Monte Carlo: {len(spec.solvers)} solver(s) x {len(spec.snr_grid)} SNR level(s) "
        f"x {spec.runs} run(s), seed {spec.seed}"
    )
    tasks = [
        (f"snr{s}-run{k}", _run_once, (M, alpha_true, snr, s, k, spec))
        for s, snr in enumerate(spec.snr_grid)
        for k in range(spec.runs)
    ]
    outcomes = TaskManager(n_jobs).run(tasks)

    cells = []
    for s, snr in enumerate(spec.snr_grid):
        batch = outcomes[s * spec.runs:(s + 1) * spec.runs]
        for j, (label, config) in enumerate(zip(labels, spec.solvers)):
            per_run = [
                o.result[j] if o.status == TaskStatus.COMPLETED else None
                for o in batch
            ]
            cells.append(_cell(label, config, snr, per_run, M.endmembers))

    report = MonteCarloReport(
        endmember_names=list(M.names),
        alpha_true=alpha_true.tolist(),
        runs=spec.runs,
        seed=spec.seed,
        cells=cells
    )
    failed = sum(cell.failures for cell in cells)
    if failed:
        logger.warning(f"{failed} solver run(s) failed and were left out of the statistics")
    return report


def compare_constraint_violation(
        spec: ExperimentSpec,
        report: Optional[MonteCarloReport] = None,
        M: Optional[EndmemberMatrix] = None
) -> Dict[str, Dict[float, float]]:
    """Mean |sum(alpha) - 1| per solver label and SNR."""
    algorithms = {config.algorithm for config in spec.solvers}
    if Algorithm.NSGM not in algorithms:
        raise ConfigError("solvers", "the comparison needs an nsgm solver")
    if not algorithms & {Algorithm.SGM, Algorithm.FCLS_PENALIZED}:
        raise ConfigError("solvers", "the comparison needs an sgm or fcls solver")

    report = report if report is not None else run_monte_carlo(spec, M)
    table: Dict[str, Dict[float, float]] = {}
    for cell in report.cells:
        table.setdefault(cell.solver, {})[cell.snr_db] = cell.mean_sum_violation
    return table


def variance_table(report: MonteCarloReport, component: int = 0) -> Dict[str, Dict[float, float]]:
    """Variance of one component, solver x SNR."""
    if not 0 <= component < len(report.endmember_names):
        raise DimensionError("component index", f"< {len(report.endmember_names)}", component)
    table: Dict[str, Dict[float, float]] = {}
    for cell in report.cells:
        table.setdefault(cell.solver, {})[cell.snr_db] = cell.variance[component]
    return table


def reference_spec(
        runs: int = 100,
        solvers: Optional[Sequence[SolverConfig]] = None,
        seed: Optional[int] = None
) -> ExperimentSpec:
    """Three reference endmembers, alpha = (0.3, 0.6, 0.1), -10..20 dB."""
    if solvers is None:
        solvers = [
            SolverConfig(algorithm=Algorithm.NSGM),
            SolverConfig(algorithm=Algorithm.SGM),
            SolverConfig(algorithm=Algorithm.ISRA),
            SolverConfig(algorithm=Algorithm.FCLS_PENALIZED)
        ]
    return ExperimentSpec(
        alpha_true=list(REFERENCE_ALPHA),
        snr_grid=list(REFERENCE_SNR_GRID),
        runs=runs,
        solvers=list(solvers),
        seed=settings.DEFAULT_SEED if seed is None else seed
    )


def _unmix_row(cube_row: np.ndarray, M: EndmemberMatrix, config: SolverConfig) -> List[dict]:
    """cube_row is bands x width."""
    results = []
    for j in range(cube_row.shape[1]):
        try:
            estimate, trace = solve(cube_row[:, j], M, config)
            results.append({
                "estimate": np.asarray(estimate),
                "iterations": trace.iterations,
                "status": trace.status.value
            })
        except UnmixError as e:
            results.append({"error": str(e)})
    return results


def unmix_cube(
        cube: np.ndarray,
        M: EndmemberMatrix,
        config: SolverConfig,
        n_jobs: Optional[int] = None
) -> CubeResult:
    """Unmix a bands x height x width cube pixel by pixel."""
    cube = np.asarray(cube, dtype=np.float64)
    if cube.ndim != 3:
        raise DimensionError("cube dimensions", 3, cube.ndim)
    bands, height, width = cube.shape
    if bands != M.bands:
        raise DimensionError("cube bands", M.bands, bands)

    tasks = [(f"row{i}", _unmix_row, (cube[:, i, :], M, config)) for i in range(height)]
    outcomes = TaskManager(n_jobs).run(tasks)

    maps = np.full((M.endmembers, height, width), FAILED_PIXEL)
    failed = np.zeros((height, width), dtype=bool)
    iterations = np.zeros((height, width), dtype=np.int64)
    unconverged = np.zeros((height, width), dtype=bool)
    errors = []
    for i, outcome in enumerate(outcomes):
        if outcome.status != TaskStatus.COMPLETED:
            failed[i, :] = True
            errors.append(outcome.error)
            continue
        for j, pixel in enumerate(outcome.result):
            if "estimate" in pixel:
                maps[:, i, j] = pixel["estimate"]
                iterations[i, j] = pixel["iterations"]
                unconverged[i, j] = pixel["status"] == SolverStatus.MAX_ITERS.value
            else:
                failed[i, j] = True
                errors.append(f"pixel ({i}, {j}): {pixel['error']}")

    total = height * width
    n_failed = int(failed.sum())
    if n_failed:
        logger.warning(f"{n_failed} of {total} pixels failed to unmix")
    if n_failed > settings.MAX_PIXEL_FAILURE_FRACTION * total:
        raise PixelFailureError(n_failed, total, errors[:10])
    if unconverged.any():
        logger.warning(f"{int(unconverged.sum())} of {total} pixels stopped at max_iters")
    return CubeResult(maps=maps, failed=failed, iterations=iterations, unconverged=unconverged)
