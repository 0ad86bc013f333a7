# tests/oracles.py

"""Brute-force references the solvers are checked against."""

from itertools import combinations
from typing import Callable, Tuple

import numpy as np

from app.schemas.model import EndmemberMatrix


def _supports(n: int):
    for size in range(1, n + 1):
        yield from combinations(range(n), size)


def simplex_qp(y: np.ndarray, M: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    argmin 1/2 ||y - M a||^2 over the simplex by enumerating supports.

    On each support the equality-constrained problem is solved through its
    KKT system; the best feasible candidate is the global minimizer.
    """
    n = M.shape[1]
    gram = M.T @ M
    proj = M.T @ y
    best, best_cost = None, np.inf
    for support in _supports(n):
        idx = list(support)
        k = len(idx)
        system = np.zeros((k + 1, k + 1))
        system[:k, :k] = gram[np.ix_(idx, idx)]
        system[:k, k] = 1.0
        system[k, :k] = 1.0
        rhs = np.concatenate([proj[idx], [1.0]])
        solution = np.linalg.lstsq(system, rhs, rcond=None)[0][:k]
        if np.any(solution < -1e-12):
            continue
        candidate = np.zeros(n)
        candidate[idx] = np.maximum(solution, 0.0)
        candidate /= candidate.sum()
        r = y - M @ candidate
        cost = 0.5 * float(r @ r)
        if cost < best_cost:
            best, best_cost = candidate, cost
    return best, best_cost


def nnls(y: np.ndarray, M: np.ndarray) -> Tuple[np.ndarray, float]:
    """argmin 1/2 ||y - M a||^2 over a >= 0 by enumerating supports."""
    n = M.shape[1]
    best, best_cost = np.zeros(n), 0.5 * float(y @ y)
    for support in _supports(n):
        idx = list(support)
        solution = np.linalg.lstsq(M[:, idx], y, rcond=None)[0]
        if np.any(solution < -1e-12):
            continue
        candidate = np.zeros(n)
        candidate[idx] = np.maximum(solution, 0.0)
        r = y - M @ candidate
        cost = 0.5 * float(r @ r)
        if cost < best_cost:
            best, best_cost = candidate, cost
    return best, best_cost


def central_difference(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    grad = np.empty_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        grad[i] = (f(x + step) - f(x - step)) / (2.0 * h)
    return grad


# -- instance helpers ----------------------------------------------------------

def random_instance(gen: np.random.Generator, bands: int, endmembers: int, boundary: bool = False):
    """Uniform [0, 1) endmembers and a simplex point, optionally with zeros."""
    M = EndmemberMatrix(gen.uniform(0.0, 1.0, size=(bands, endmembers)))
    alpha = gen.dirichlet(np.ones(endmembers))
    if boundary:
        zeros = gen.choice(endmembers, size=max(1, endmembers // 2), replace=False)
        alpha[zeros] = 0.0
        if alpha.sum() == 0.0:
            alpha[0] = 1.0
        alpha /= alpha.sum()
    return M, alpha


def noisy(gen: np.random.Generator, M, alpha: np.ndarray, snr_db: float) -> np.ndarray:
    clean = M.data @ alpha
    if np.isinf(snr_db):
        return clean
    sigma = np.sqrt(clean @ clean / (M.bands * 10.0 ** (snr_db / 10.0)))
    return clean + sigma * gen.standard_normal(M.bands)


def assert_monotone(trace) -> None:
    """Recorded costs never increase."""
    steps = np.diff(trace.costs)
    assert np.all(steps <= 0.0), f"cost rose at iterations {np.nonzero(steps > 0)[0]}"
