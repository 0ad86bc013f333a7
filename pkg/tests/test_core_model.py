# tests/test_core_model.py

import numpy as np
import pytest

from app.core.errors import DimensionError, FeasibilityError, InputError
from app.schemas.model import AbundanceVector, EndmemberMatrix, NoiseModel, Pixel
from app.services.core_model import (
    centered_gradient,
    kkt_report,
    least_squares_cost,
    negative_gradient,
    residual
)
from tests.oracles import central_difference, random_instance, simplex_qp


def test_endmember_matrix_validation():
    M = EndmemberMatrix([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
    assert (M.bands, M.endmembers) == (3, 2)
    assert M.names == ("em1", "em2")

    with pytest.raises(DimensionError):
        EndmemberMatrix(np.ones((2, 3)))
    with pytest.raises(FeasibilityError):
        EndmemberMatrix([[1.0, -0.1], [0.0, 1.0]])
    with pytest.raises(InputError):
        EndmemberMatrix([[1.0, np.nan], [0.0, 1.0]])
    with pytest.raises(DimensionError):
        EndmemberMatrix(np.eye(2), names=("only",))


def test_arrays_are_read_only():
    M = EndmemberMatrix(np.eye(3))
    with pytest.raises(ValueError):
        M.data[0, 0] = 2.0


def test_abundance_vector_renormalizes_within_tolerance():
    a = AbundanceVector([0.2, 0.3, 0.5 + 5e-7])
    assert abs(a.values.sum() - 1.0) <= 1e-15

    with pytest.raises(FeasibilityError):
        AbundanceVector([0.2, 0.3, 0.6])
    with pytest.raises(FeasibilityError):
        AbundanceVector([1.1, -0.1])

    assert np.allclose(AbundanceVector.normalized([2.0, 2.0]).values, [0.5, 0.5])
    assert np.allclose(AbundanceVector.uniform(4).values, 0.25)


def test_noise_model_rejects_negative_sigma():
    assert NoiseModel(sigma=0.0).seed is None
    with pytest.raises(InputError):
        NoiseModel(sigma=-1.0)


def test_pure_pixel_has_zero_residual():
    M = EndmemberMatrix(np.eye(3))
    y = Pixel([1.0, 0.0, 0.0])
    assert np.all(residual(y, M, [1.0, 0.0, 0.0]) == 0.0)
    assert least_squares_cost(y, M, [1.0, 0.0, 0.0]) == 0.0


def test_cost_of_known_residual():
    M = EndmemberMatrix(np.eye(2))
    assert least_squares_cost([1.0, 1.0], M, [0.0, 0.0]) == pytest.approx(1.0)


def test_dimension_mismatch():
    M = EndmemberMatrix(np.eye(3))
    with pytest.raises(DimensionError):
        residual(np.ones(4), M, np.ones(3) / 3)
    with pytest.raises(DimensionError):
        least_squares_cost(np.ones(3), M, np.ones(2) / 2)


def test_negative_gradient_matches_finite_differences(rng):
    for _ in range(50):
        R = int(rng.integers(2, 7))
        M, _ = random_instance(rng, int(rng.integers(max(R, 5), 40)), R)
        y = rng.uniform(0.0, 1.0, M.bands)
        alpha = rng.uniform(0.0, 1.0, M.endmembers)

        numeric = -central_difference(lambda a: least_squares_cost(y, M, a), alpha)
        analytic = negative_gradient(y, M, alpha)
        scale = max(np.abs(analytic).max(), 1e-12)
        assert np.abs(numeric - analytic).max() / scale < 1e-5


def test_cost_invariant_under_row_permutation(rng):
    for _ in range(20):
        M, alpha = random_instance(rng, 40, int(rng.integers(2, 7)))
        y = M.data @ alpha + 0.05 * rng.standard_normal(M.bands)
        order = rng.permutation(M.bands)
        shuffled = EndmemberMatrix(M.data[order])
        assert least_squares_cost(y[order], shuffled, alpha) == pytest.approx(
            least_squares_cost(y, M, alpha), rel=1e-12
        )
        assert np.allclose(negative_gradient(y[order], shuffled, alpha), negative_gradient(y, M, alpha),
                           rtol=1e-12, atol=1e-14)


def test_centered_gradient_ignores_constant_shift(rng):
    alpha = rng.dirichlet(np.ones(4))
    g = rng.normal(size=4)
    centered = centered_gradient(g, alpha)
    assert abs(alpha @ centered) < 1e-15
    assert np.allclose(centered_gradient(g + 3.0, alpha), centered, atol=1e-14)


def test_kkt_report_at_simplex_optimum(rng):
    M, alpha_true = random_instance(rng, 30, 4, boundary=True)
    y = M.data @ alpha_true + 0.01 * rng.standard_normal(30)
    optimum, _ = simplex_qp(y, M.data)

    report = kkt_report(y, M, optimum)
    assert report.max_complementarity < 1e-9
    assert report.stationarity_residual < 1e-8
    # multipliers of active bounds are non-negative
    assert np.all(report.multipliers[optimum <= 1e-12] >= -1e-8)


def test_kkt_report_away_from_optimum(reference):
    y = reference.data @ np.array([0.3, 0.6, 0.1])
    report = kkt_report(y, reference, np.full(3, 1.0 / 3.0))
    assert report.max_complementarity > 1e-3
    assert report.feasibility_violation <= 1e-15


def test_kkt_report_rejects_infeasible_points():
    M = EndmemberMatrix(np.eye(2))
    with pytest.raises(FeasibilityError):
        kkt_report([1.0, 0.0], M, [1.2, -0.2])
    with pytest.raises(FeasibilityError):
        kkt_report([1.0, 0.0], M, [0.5, 0.6])
    # positivity-only audit does not need the sum
    report = kkt_report([1.0, 0.0], M, [1.0, 0.0], simplex=False)
    assert report.max_complementarity == 0.0
