"""端到端回归：种植实例族上的全部模式组合、阶段预算、John 椭球与命令行示例"""

import math

import anyio
import numpy as np
import pytest

from conic_feasibility.cli import EXIT_OK, main
from conic_feasibility.driver import SolveConfig, john_ellipsoid, solve
from conic_feasibility.harness import BenchCell, phase_count_correlation, run_bench_cell, scaling_fits
from conic_feasibility.instance import generate_planted, load_instance
from conic_feasibility.phases import PhaseMode
from conic_feasibility.rescaler import RescaleKind

pytestmark = pytest.mark.slow

MODES = [PhaseMode.SMOOTH, PhaseMode.MWU_STANDARD, PhaseMode.MWU_MODIFIED]
SCALING_NS = (4, 8, 16, 32)


def _suite(count=50, seed=2718, n_range=(4, 30), max_m=100):
    rng = np.random.default_rng(seed)
    for index in range(count):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        m = int(rng.integers(2 * n, max_m + 1))
        rho = float(10.0 ** rng.uniform(-3.0, -1.0))
        instance, _ = generate_planted(n, m, rho, seed=index)
        yield instance, rho


@pytest.mark.parametrize("rescale", list(RescaleKind))
@pytest.mark.parametrize("phase", MODES)
def test_planted_suite_is_feasible_within_budget(phase, rescale):
    for instance, rho in _suite():
        n = instance.n
        cfg = SolveConfig(phase_mode=phase, rescale_mode=rescale, rho_hint=rho)
        result = solve(instance, cfg)
        assert result.is_feasible
        assert np.min(instance.original_rows @ result.certificate.x) > 0.0
        assert result.phases_used <= math.ceil(8 * n * math.log(1.0 / rho))
        assert result.volume_log_growth <= 3.0 * (n * math.log(1.0 / rho) + n)
        for report in result.rescales:
            assert report.det_growth_log > 0.0
            if report.kind != RescaleKind.RANK1:
                assert 2.0 * report.det_growth_log >= report.alpha / 2.0 - 1e-9


def test_modified_descent_scales_better_in_n():
    cells = [BenchCell(n=n, m=3 * n, rho=1e-2, mode=mode, rescale=RescaleKind.MULTI_RANK.value, seed=seed)
             for n in SCALING_NS for mode in (PhaseMode.MWU_STANDARD.value, PhaseMode.MWU_MODIFIED.value)
             for seed in range(10)]
    rows = [run_bench_cell(cell) for cell in cells]
    assert all(row.status == "ok" for row in rows)
    fits = scaling_fits(rows)
    standard = fits["mwu/multirank"]["per_phase_iters_vs_n"]
    modified = fits["mwu-fast/multirank"]["per_phase_iters_vs_n"]
    assert modified <= standard - 0.5


def test_phase_count_does_not_grow_with_rho():
    cells = [BenchCell(n=8, m=100, rho=rho, mode=PhaseMode.MWU_MODIFIED.value,
                       rescale=RescaleKind.MULTI_RANK.value, seed=seed)
             for rho in (1e-1, 1e-2, 1e-3, 1e-4) for seed in range(20)]
    rows = [run_bench_cell(cell) for cell in cells]
    assert all(row.status == "ok" for row in rows)
    # ρ > Δ 时不可能出现对偶证据
    assert all(row.phases == 1 for row in rows if row.rho == 1e-1)
    corr = phase_count_correlation(rows)
    assert corr is not None and corr <= 0.0


def test_john_ellipsoid_on_planted_suite():
    for instance, rho in _suite(count=6, seed=161, n_range=(4, 10)):
        result = john_ellipsoid(instance, SolveConfig(rho_hint=rho))
        r = result.roundedness
        assert r.passed
        assert r.ratio <= 1.5 * r.T + 1e-12
        assert np.all(instance.original_rows @ r.inner_center > 0.0)


def test_john_ellipsoid_T_trend(record_property):
    log_n, log_T = [], []
    for n in SCALING_NS:
        for seed in range(3):
            instance, _ = generate_planted(n, 3 * n, 1e-2, seed=seed)
            r = john_ellipsoid(instance, SolveConfig(rho_hint=1e-2)).roundedness
            assert r.passed
            assert r.ratio <= 1.5 * r.T + 1e-12
            log_n.append(math.log(n))
            log_T.append(math.log(r.T))
    slope, _ = np.polyfit(log_n, log_T, 1)
    record_property("john_T_slope_vs_n", float(slope))
    assert slope < 1.5


def test_cli_example_end_to_end(tmp_path):
    instance = tmp_path / "a.json"
    cert = tmp_path / "c.json"
    assert anyio.run(main, ["gen", "--n", "10", "--m", "60", "--rho", "1e-3", "--seed", "1",
                            "--out", str(instance)]) == EXIT_OK
    assert anyio.run(main, ["solve", "--instance", str(instance), "--phase", "mwu-fast",
                            "--rescale", "multirank", "--out", str(cert)]) == EXIT_OK
    assert anyio.run(main, ["verify", "--instance", str(instance), "--cert", str(cert)]) == EXIT_OK
    assert load_instance(instance).n == 10


def test_seeded_runs_are_bit_identical():
    instance, _ = generate_planted(6, 20, 0.02, seed=4)
    cfg = SolveConfig(rescale_mode=RescaleKind.RANK1, seed=9)
    first = solve(instance, cfg).to_document()
    second = solve(instance, cfg).to_document()
    assert first == second
