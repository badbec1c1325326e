import math

import numpy as np
import pytest

from conic_feasibility.exceptions import PreconditionError, SamplingError, ValidationError
from conic_feasibility.harness import mc_volume_fraction
from conic_feasibility.instance import ConeInstance, generate_planted, normalize_rows
from conic_feasibility.norm import NormState
from conic_feasibility.rescaler import (
    DirectionMethod,
    RescaleKind,
    derandomized_direction,
    derandomized_objective,
    estimate_width,
    gaussian_subset_direction,
    gaussian_threshold,
    multirank_rescale,
    norm_update,
    rank1_rescale,
    sample_unit_ball,
)

from conftest import random_simplex, random_unit_rows, thin_wedge


def _signed_basis(n):
    return ConeInstance.from_rows(np.vstack([np.eye(n), -np.eye(n)]))


def test_rank1_rescale_examples():
    instance = ConeInstance.from_rows([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
    rescaled, step, report = rank1_rescale(instance, np.array([1.0, 0.0]), np.array([0.5, 0.5, 0.0]))
    assert np.allclose(rescaled.rows, instance.rows)
    assert np.allclose(step.c, [1.0, 0.0])
    assert report.kind == RescaleKind.RANK1
    assert report.width_bound == 0.0
    assert math.isclose(report.det_growth_log, math.log(2.0))


def test_rank1_rescale_shrinks_along_direction():
    instance = ConeInstance.from_rows([[1.0, 0.1], [-1.0, 0.1]])
    instance = normalize_rows(instance, NormState.identity(2))
    rescaled, _, _ = rank1_rescale(instance, np.array([0.0, 1.0]), np.array([0.5, 0.5]))
    expected = np.array([[1.0, 0.05], [-1.0, 0.05]]) / math.sqrt(1.0025)
    assert np.allclose(rescaled.rows, expected)


def test_rank1_rescale_precondition(orthant2):
    with pytest.raises(PreconditionError) as exc:
        rank1_rescale(orthant2, np.array([0.5, 0.0]), np.array([0.5, 0.5]))
    assert math.isclose(exc.value.measured, math.sqrt(2.0))
    assert math.isclose(exc.value.bound, 1.0 / (3.0 * math.sqrt(2.0)))


def test_multirank_signed_basis():
    instance = _signed_basis(3)
    lam = np.full(6, 1.0 / 6.0)
    rescaled, step, report = multirank_rescale(instance, lam)
    assert np.allclose(step.M, np.eye(3) / 3.0)
    assert math.isclose(report.alpha, 3.0)
    assert math.isclose(report.det_growth_log, 1.5 * math.log(2.0))
    assert report.det_growth_log >= report.alpha / 4.0
    assert np.allclose(rescaled.rows, instance.rows)


def test_multirank_alpha_is_capped():
    lam = np.full(6, 1.0 / 6.0)
    _, _, report = multirank_rescale(_signed_basis(3), lam, alpha_cap=2.0)
    assert report.alpha == 2.0


def test_multirank_precondition(orthant2):
    with pytest.raises(PreconditionError):
        multirank_rescale(orthant2, np.array([0.5, 0.5]))


def test_multirank_determinant_of_uniform_moment():
    M = np.eye(3) / 3.0
    assert np.linalg.det(np.eye(3) + M) >= math.exp(0.5)
    assert math.isclose(np.linalg.det(np.eye(3) + M), (4.0 / 3.0) ** 3)


def test_multirank_ball_bound(rng):
    instance = thin_wedge(0.02)
    lam = np.array([0.5, 0.5])
    _, step, report = multirank_rescale(instance, lam)
    evidence = np.linalg.norm(lam @ instance.rows)
    points = sample_unit_ball(rng, 20_000, 3)
    inside = points[np.all(points @ instance.rows.T > 0.0, axis=1)]
    assert inside.shape[0] > 0
    mapped = np.array([step.forward(x) for x in inside])
    assert np.all(np.sum(mapped ** 2, axis=1) <= 1.0 + report.alpha * evidence + 1e-9)


def test_norm_update_doubles_identity():
    instance = _signed_basis(2)
    lam = np.full(4, 0.25)
    rescaled, norm, report = norm_update(NormState.identity(2, 4), lam, instance)
    assert math.isclose(report.alpha, 2.0)
    assert np.allclose(norm.H, 2.0 * np.eye(2))
    assert np.allclose(norm.reconstruct(instance.original_rows), norm.H, atol=1e-10)
    assert np.allclose(norm.dual_row_norms(rescaled.rows), 1.0)
    assert norm.updates == 1


def test_norm_update_coefficient_log_across_updates():
    instance = _signed_basis(2)
    lam = np.full(4, 0.25)
    instance, norm, _ = norm_update(NormState.identity(2, 4), lam, instance)
    instance, norm, report = norm_update(norm, lam, instance)
    assert np.allclose(norm.H, 4.0 * np.eye(2))
    assert np.allclose(norm.coefficients, 1.5)
    assert np.allclose(norm.reconstruct(instance.original_rows), norm.H, atol=1e-10)
    assert report.extras["min_eigenvalue"] > 0.0


def test_norm_update_precondition(orthant2):
    with pytest.raises(PreconditionError):
        norm_update(NormState.identity(2), np.array([0.5, 0.5]), orthant2)


def test_norm_update_increases_volume_fraction():
    instance = thin_wedge(0.02, n=2)
    before = mc_volume_fraction(instance, NormState.identity(2), samples=400_000, seed=1)
    rescaled, norm, _ = norm_update(NormState.identity(2, 2), np.array([0.5, 0.5]), instance)
    after = mc_volume_fraction(rescaled, norm, samples=400_000, seed=2)
    assert after.estimate > before.estimate + 3.0 * (after.stderr + before.stderr)


def test_gaussian_direction_single_row():
    instance = ConeInstance.from_rows([[0.6, 0.8]])
    thin = gaussian_subset_direction(instance, np.array([1.0]), seed=3)
    assert np.allclose(thin.c, [0.6, 0.8])
    assert thin.draws == 1
    assert thin.method == DirectionMethod.GAUSSIAN


def test_gaussian_direction_coordinate_rows():
    instance = ConeInstance.from_rows(np.eye(4))
    thin = gaussian_subset_direction(instance, np.full(4, 0.25), seed=0)
    c, J = thin
    assert thin.draws == 1
    assert np.linalg.norm(c) >= gaussian_threshold(4)
    assert math.isclose(np.linalg.norm(c), math.sqrt(len(J)) / 4.0)


def test_gaussian_direction_success_frequency(rng):
    successes = trials = 0
    for n in (4, 8, 16):
        for _ in range(167):
            m = int(rng.integers(2 * n, 4 * n))
            instance = ConeInstance.from_rows(random_unit_rows(rng, m, n))
            thin = gaussian_subset_direction(instance, random_simplex(rng, m), rng)
            successes += thin.draws == 1
            trials += 1
    assert successes / trials >= 0.25


def test_derandomized_single_row():
    instance = ConeInstance.from_rows([[1.0, 0.0, 0.0]])
    thin = derandomized_direction(instance, np.array([1.0]))
    assert np.array_equal(thin.g, [3.0, 0.0, 0.0])
    assert derandomized_objective(instance.rows, np.array([1.0]), thin.g) > 0.0
    assert np.allclose(thin.c, [1.0, 0.0, 0.0])


def test_derandomized_coordinate_rows_and_determinism():
    n = 9
    instance = ConeInstance.from_rows(np.eye(n))
    lam = np.full(n, 1.0 / n)
    first = derandomized_direction(instance, lam)
    second = derandomized_direction(instance, lam)
    assert np.array_equal(first.g, second.g)
    assert np.linalg.norm(first.c) >= 1.0 / (20.0 * math.sqrt(n))


def test_derandomized_hard_guarantee(rng):
    for _ in range(50):
        n = int(rng.integers(2, 17))
        m = int(rng.integers(n, 3 * n))
        rows = random_unit_rows(rng, m, n)
        lam = random_simplex(rng, m)
        thin = derandomized_direction(ConeInstance.from_rows(rows), lam)
        v = thin.g / np.linalg.norm(thin.g)
        assert lam @ np.abs(rows @ v) >= 1.0 / (10.0 * math.sqrt(n))


def test_lambda_must_be_on_simplex(orthant2):
    with pytest.raises(ValidationError):
        gaussian_subset_direction(orthant2, np.array([0.7, 0.7]))


def test_estimate_width_orthant(orthant2):
    wide = estimate_width(orthant2, np.array([1.0, 0.0]), samples=20_000, seed=4)
    assert 0.95 <= wide.value <= 1.0
    diagonal = estimate_width(orthant2, np.array([1.0, 1.0]) / math.sqrt(2.0), samples=20_000, seed=5)
    assert 0.95 <= diagonal.value <= 1.0


def test_estimate_width_rejects_empty_sample():
    with pytest.raises(SamplingError):
        estimate_width(ConeInstance.from_rows([[1.0, 0.0], [-1.0, 0.0]]), np.array([0.0, 1.0]),
                       samples=1000, seed=0)


def test_width_bound_holds_on_planted_thin_cone():
    instance = thin_wedge(0.01, n=2)
    lam = np.array([0.5, 0.5])
    thin = gaussian_subset_direction(instance, lam, seed=8)
    width = estimate_width(instance, thin.c, samples=200_000, seed=9)
    bound = np.linalg.norm(lam @ instance.rows) / np.linalg.norm(thin.c)
    stderr = 1.0 / math.sqrt(width.accepted)
    assert width.value <= bound + 3.0 * stderr


def test_rescale_preserves_feasibility(rng):
    instance, _ = generate_planted(3, 10, 0.05, seed=2)
    lam = rng.dirichlet(np.ones(instance.m))
    # 构造 ‖λA‖ 很小的 λ：加上关于原点对称的行
    sym = ConeInstance.from_rows(np.vstack([instance.rows, -instance.rows]))
    sym_lam = np.concatenate([lam, lam]) / 2.0
    rescaled, step, _ = multirank_rescale(sym, sym_lam)
    points = rng.standard_normal((500, 3))
    signs_new = rescaled.rows @ points.T > 0.0
    signs_old = sym.rows @ np.array([step.inverse(x) for x in points]).T > 0.0
    assert np.array_equal(signs_new, signs_old)


@pytest.mark.slow
def test_rank1_volume_ratio_on_rotated_wedges():
    rng = np.random.default_rng(77)
    passed = 0
    for trial in range(40):
        rotation, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        instance = thin_wedge(0.02, rotation=rotation)
        lam = np.array([0.5, 0.5])
        thin = gaussian_subset_direction(instance, lam, seed=trial)
        rescaled, _, _ = rank1_rescale(instance, thin.c, lam)
        before = mc_volume_fraction(instance, samples=1_000_000, seed=2 * trial)
        after = mc_volume_fraction(rescaled, samples=1_000_000, seed=2 * trial + 1)
        passed += after.estimate >= 1.35 * before.estimate
    assert passed >= 38


@pytest.mark.slow
def test_derandomized_direction_many_draws():
    rng = np.random.default_rng(314)
    for _ in range(200):
        n = int(rng.integers(2, 33))
        m = int(rng.integers(n, 4 * n))
        rows = random_unit_rows(rng, m, n)
        thin = derandomized_direction(ConeInstance.from_rows(rows), random_simplex(rng, m))
        assert np.linalg.norm(thin.c) >= 1.0 / (20.0 * math.sqrt(n))
