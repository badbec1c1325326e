import json
import math

import numpy as np
import pytest

from conic_feasibility.exceptions import SamplingError, ValidationError
from conic_feasibility.instance import (
    BudgetExhausted,
    ConeInstance,
    DualEvidence,
    Feasible,
    MultiRankStep,
    Rank1Step,
    TransformLog,
    certificate_from_document,
    certificate_to_document,
    generate_planted,
    load_instance,
    normalize_rows,
    planted_containment,
    pull_back,
    save_instance,
    verify_certificate,
    working_instance,
)
from conic_feasibility.norm import NormState


def test_load_instance_rejects_zero_row():
    doc = {"n": 2, "m": 2, "rows": [[1.0, 0.0], [0.0, 0.0]]}
    with pytest.raises(ValidationError) as exc:
        load_instance(doc)
    assert exc.value.code == "zero_row"


def test_load_instance_rejects_non_finite():
    doc = {"n": 2, "m": 1, "rows": [[float("nan"), 1.0]]}
    with pytest.raises(ValidationError) as exc:
        load_instance(doc)
    assert exc.value.code == "non_finite"


def test_load_instance_rejects_dimension_mismatch():
    doc = {"n": 2, "m": 1, "rows": [[1.0, 0.0, 0.0]]}
    with pytest.raises(ValidationError) as exc:
        load_instance(doc)
    assert exc.value.code == "dimension_mismatch"


def test_load_instance_rejects_malformed_json():
    with pytest.raises(ValidationError) as exc:
        load_instance("{not json")
    assert exc.value.code == "malformed"


def test_load_instance_rejects_missing_rows():
    with pytest.raises(ValidationError):
        load_instance({"n": 2, "m": 1})


def test_save_and_load_are_bit_exact(tmp_path):
    instance, witness = generate_planted(5, 17, 0.05, seed=11)
    path = tmp_path / "inst.json"
    save_instance(instance, path)
    loaded = load_instance(path)
    assert np.array_equal(loaded.original_rows, instance.original_rows)
    assert np.array_equal(loaded.planted.center, witness.center)
    assert loaded.planted.rho == witness.rho
    assert json.loads(path.read_text())["planted"]["construction"] == "planted-sphere-reflection"


def test_instance_arrays_are_read_only(orthant2):
    with pytest.raises(ValueError):
        orthant2.rows[0, 0] = 5.0


def test_generate_planted_contains_ball():
    instance, witness = generate_planted(6, 40, 0.2, seed=7)
    assert instance.n == 6 and instance.m == 40
    assert np.allclose(np.linalg.norm(instance.rows, axis=1), 1.0)
    assert np.all(instance.rows @ witness.center >= 0.2)
    assert planted_containment(instance, witness) >= -1e-12


def test_generate_planted_is_deterministic():
    a, _ = generate_planted(4, 10, 0.1, seed=42)
    b, _ = generate_planted(4, 10, 0.1, seed=42)
    c, _ = generate_planted(4, 10, 0.1, seed=43)
    assert np.array_equal(a.rows, b.rows)
    assert not np.array_equal(a.rows, c.rows)


@pytest.mark.parametrize("n,m,rho", [(4, 10, 0.0), (4, 10, 1.0), (1, 10, 0.1), (4, 0, 0.1)])
def test_generate_planted_rejects_bad_parameters(n, m, rho):
    with pytest.raises(ValidationError):
        generate_planted(n, m, rho, seed=0)


def test_generate_planted_retry_cap():
    # ρ 接近 1 时几乎不可能采样成功
    with pytest.raises(SamplingError) as exc:
        generate_planted(30, 2, 0.999, seed=0)
    assert exc.value.code == "planted_retry_cap"


def test_normalize_rows_euclidean():
    instance = ConeInstance.from_rows([[3.0, 4.0], [0.0, -2.0]])
    normalized = normalize_rows(instance, NormState.identity(2))
    assert np.allclose(normalized.rows, [[0.6, 0.8], [0.0, -1.0]])
    assert np.array_equal(normalized.original_rows, instance.original_rows)


def test_normalize_rows_under_norm():
    instance = ConeInstance.from_rows([[1.0, 0.0], [0.0, 1.0]])
    norm = NormState(H=np.diag([4.0, 1.0]))
    normalized = normalize_rows(instance, norm)
    assert np.allclose(normalized.rows, [[2.0, 0.0], [0.0, 1.0]])
    assert np.allclose(norm.dual_row_norms(normalized.rows), 1.0)


def test_normalize_rows_is_idempotent(rng):
    instance = ConeInstance.from_rows(rng.standard_normal((15, 5)) * rng.uniform(0.1, 10.0, size=(15, 1)))
    norm = NormState(H=np.eye(5) + np.diag(rng.uniform(0.0, 3.0, size=5)))
    once = normalize_rows(instance, norm)
    twice = normalize_rows(once, norm)
    assert np.max(np.abs(twice.rows - once.rows)) < 1e-12


def test_rank1_step_inverse_and_forward_agree(rng):
    c = rng.standard_normal(4)
    step = Rank1Step(c=c / np.linalg.norm(c))
    x = rng.standard_normal(4)
    assert np.allclose(step.inverse(step.forward(x)), x)
    assert np.allclose(step.forward(step.c), 2.0 * step.c)
    assert np.allclose(step.inverse_matrix() @ x, step.inverse(x))


def test_rank1_step_rejects_non_unit():
    with pytest.raises(ValidationError):
        Rank1Step(c=np.array([2.0, 0.0]))


def test_multirank_step_validation():
    with pytest.raises(ValidationError) as exc:
        MultiRankStep(M=np.eye(2), alpha=0.5)
    assert exc.value.code == "bad_trace"
    with pytest.raises(ValidationError) as exc:
        MultiRankStep(M=np.eye(2) / 2.0, alpha=3.0)
    assert exc.value.code == "bad_alpha"


def test_transform_log_pull_back_matches_matrix(rng):
    c = rng.standard_normal(3)
    M = np.diag([0.5, 0.3, 0.2])
    log = TransformLog().append(Rank1Step(c=c / np.linalg.norm(c))).append(MultiRankStep(M=M, alpha=2.0))
    x = rng.standard_normal(3)
    assert len(log) == 2
    assert np.allclose(pull_back(log.push_forward(x), log), x)
    assert np.allclose(log.pullback_matrix(3) @ x, pull_back(x, log))
    restored = TransformLog.from_document(json.loads(json.dumps(log.to_document())))
    assert np.allclose(pull_back(x, restored), pull_back(x, log))


def test_verify_feasible_certificate(orthant2):
    report = verify_certificate(orthant2, Feasible(x=np.array([1.0, 1.0])))
    assert report.passed and report.margin == 1.0
    report = verify_certificate(orthant2, Feasible(x=np.array([1.0, 0.0])))
    assert not report.passed and report.margin == 0.0


def test_verify_feasible_dimension_mismatch(orthant2):
    with pytest.raises(ValidationError):
        verify_certificate(orthant2, Feasible(x=np.array([1.0, 1.0, 1.0])))


def test_verify_dual_evidence(infeasible_pair):
    good = DualEvidence(lambda_=np.array([0.5, 0.5]), delta_achieved=0.0)
    assert verify_certificate(infeasible_pair, good).passed
    tampered = DualEvidence(lambda_=np.array([0.6, 0.4]), delta_achieved=0.0)
    report = verify_certificate(infeasible_pair, tampered)
    assert not report.passed
    assert math.isclose(report.evidence_norm, 0.2)
    negative = DualEvidence(lambda_=np.array([1.5, -0.5]), delta_achieved=10.0)
    assert not verify_certificate(infeasible_pair, negative).passed


def test_verify_budget_exhausted_never_passes(orthant2):
    assert not verify_certificate(orthant2, BudgetExhausted(summary={"phases_used": 3})).passed


def test_certificate_document_round_trip():
    doc = certificate_to_document(Feasible(x=np.array([0.1, 1.0 / 3.0])))
    cert, log = certificate_from_document(json.loads(json.dumps(doc)))
    assert isinstance(cert, Feasible)
    assert cert.x[1] == 1.0 / 3.0
    assert len(log) == 0

    doc = certificate_to_document(DualEvidence(lambda_=np.array([0.25, 0.75]), delta_achieved=0.01))
    cert, _ = certificate_from_document(doc)
    assert isinstance(cert, DualEvidence) and cert.delta_achieved == 0.01


def test_certificate_document_rejects_unknown_variant():
    with pytest.raises(ValidationError):
        certificate_from_document({"variant": "maybe"})


def _random_log(rng, n, length):
    log = TransformLog()
    for _ in range(length):
        if rng.random() < 0.5:
            c = rng.standard_normal(n)
            log = log.append(Rank1Step(c=c / np.linalg.norm(c)))
        else:
            rows = rng.standard_normal((n + 2, n))
            rows /= np.linalg.norm(rows, axis=1, keepdims=True)
            lam = rng.dirichlet(np.ones(n + 2))
            M = (rows.T * lam) @ rows
            M = 0.5 * (M + M.T)
            alpha = min(1.0 / np.linalg.eigvalsh(M)[-1], 8.0)
            log = log.append(MultiRankStep(M=M, alpha=alpha))
    return log


@pytest.mark.parametrize("length", [1, 5, 20])
def test_pull_back_inverts_push_forward_on_random_logs(rng, length):
    for _ in range(10):
        n = int(rng.integers(2, 9))
        log = _random_log(rng, n, length)
        x = rng.standard_normal(n)
        restored = pull_back(log.push_forward(x), log)
        assert np.linalg.norm(restored - x) <= 1e-9 * np.linalg.norm(x)


def test_working_instance_rebuilds_rescaled_rows(rng):
    instance = ConeInstance.from_rows(rng.standard_normal((6, 3)))
    assert working_instance(instance, TransformLog()) is instance
    log = _random_log(rng, 3, 4)
    working = working_instance(instance, log)
    expected = instance.original_rows @ log.pullback_matrix(3)
    expected /= np.linalg.norm(expected, axis=1, keepdims=True)
    assert np.allclose(working.rows, expected)
    assert np.array_equal(working.original_rows, instance.original_rows)
