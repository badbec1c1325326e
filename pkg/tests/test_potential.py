import math

import numpy as np
import pytest

from conic_feasibility.exceptions import NumericalBreakdownError, ValidationError
from conic_feasibility.instance import ConeInstance, generate_planted
from conic_feasibility.norm import NormState
from conic_feasibility.potential import evaluate, grad_check, log_weights, phi_log, second_moment


def test_evaluate_orthant_at_origin(orthant2):
    ev = evaluate(orthant2, np.zeros(2), NormState.identity(2))
    assert math.isclose(ev.phi_log, math.log(2.0))
    assert np.allclose(ev.lambda_, [0.5, 0.5])
    assert np.allclose(ev.y, [0.5, 0.5])
    assert math.isclose(ev.norm_y_dual, math.sqrt(2.0) / 2.0)
    assert math.isclose(ev.phi, 2.0)


def test_phi_log_is_stable_for_large_arguments(orthant2):
    assert math.isclose(phi_log(orthant2, np.array([1000.0, 1000.0])), -1000.0 + math.log(2.0))
    assert math.isclose(phi_log(orthant2, np.array([-1000.0, -1000.0])), 1000.0 + math.log(2.0))
    ev = evaluate(orthant2, np.array([800.0, -800.0]), NormState.identity(2))
    assert np.all(np.isfinite(ev.lambda_))
    assert np.allclose(ev.y, [0.0, 1.0])


def test_log_weights_sum_to_one(rng):
    value, weights = log_weights(rng.standard_normal(50) * 300.0)
    assert math.isfinite(value)
    assert math.isclose(weights.sum(), 1.0, rel_tol=1e-12)


def test_evaluate_rejects_non_finite_point(orthant2):
    with pytest.raises(ValidationError) as exc:
        evaluate(orthant2, np.array([np.inf, 0.0]), NormState.identity(2))
    assert exc.value.code == "non_finite"


def test_evaluate_detects_unnormalized_rows():
    instance = ConeInstance.from_rows([[2.0, 0.0]])
    with pytest.raises(NumericalBreakdownError):
        evaluate(instance, np.zeros(2), NormState.identity(2))


def test_second_moment_has_unit_trace(planted_small, rng):
    lam = rng.dirichlet(np.ones(planted_small.m))
    moment = second_moment(planted_small, lam)
    assert math.isclose(moment.trace, 1.0, rel_tol=1e-12)
    assert np.allclose(moment.M, moment.M.T)
    assert np.linalg.eigvalsh(moment.M)[0] >= -1e-14


def test_grad_check_passes_on_random_points(planted_small, rng):
    for _ in range(5):
        x = 0.5 * rng.standard_normal(planted_small.n)
        report = grad_check(planted_small, x, h=1e-4, directions=5, seed=int(rng.integers(1 << 30)))
        assert report.passed, report


def test_grad_check_rejects_bad_step(orthant2):
    with pytest.raises(ValidationError):
        grad_check(orthant2, np.zeros(2), h=1e-2)


@pytest.mark.slow
def test_grad_check_hundred_points():
    instance, _ = generate_planted(5, 20, 0.05, seed=9)
    rng = np.random.default_rng(99)
    for i in range(100):
        x = 0.5 * rng.standard_normal(instance.n)
        report = grad_check(instance, x, h=1e-4, directions=10, seed=i)
        assert report.grad_max_rel_err < 1e-6
        assert report.hess_max_rel_err < 1e-4


@pytest.mark.parametrize("shift", [-50.0, 3.5, 700.0])
def test_weights_are_shift_invariant(rng, shift):
    # 二进分数，平移后仍可精确表示
    exponents = rng.integers(-160, 160, size=40) / 8.0
    value, lam = log_weights(exponents)
    shifted_value, shifted_lam = log_weights(exponents + shift)
    assert np.max(np.abs(shifted_lam - lam)) <= 1e-14
    assert math.isclose(shifted_value, value + shift, rel_tol=1e-12)
