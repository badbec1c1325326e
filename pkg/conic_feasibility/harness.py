"""
测试预言与基准：蒙特卡洛体积分数、谱分桶预言、基准扫描与运行报告。
"""

import csv
import io
import logging
import math
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import anyio
import numpy as np
from scipy import stats

from . import __version__
from .config import Config
from .direction import CaseTag
from .driver import SolveConfig, solve
from .exceptions import FileOperationError, SolverError, ValidationError
from .instance import ConeInstance, PlantedWitness, generate_planted
from .linalg import sym_eig, symmetrize
from .norm import NormState
from .rescaler import sample_unit_ball
from .seeding import MONTE_CARLO, derive_rng

logger = logging.getLogger(__name__)

BENCH_COLUMNS = ("n", "m", "rho", "mode", "rescale", "phases", "iters", "rescales", "wall_ms", "seed", "status")

_MC_CHUNK = 100_000
_MC_MAX_DIM = 6


@dataclass(frozen=True)
class VolumeEstimate:
    estimate: float
    stderr: float
    samples: int

    def to_document(self) -> Dict[str, Any]:
        return asdict(self)


def mc_volume_fraction(
    instance: ConeInstance,
    norm: Optional[NormState] = None,
    samples: int = 100_000,
    seed: int = 0,
) -> VolumeEstimate:
    """
    μ(H) = vol(B_H ∩ P)/vol(B_H) 的蒙特卡洛估计。

    B_H = H^{-1/2}B，在单位球内均匀采样后经 H^{-1/2} 映射。

    Raises:
        ValidationError: n > 6 或样本数不为正
    """
    n = instance.n
    if n > _MC_MAX_DIM:
        raise ValidationError(f"体积预言只支持 n ≤ {_MC_MAX_DIM}，收到 n={n}", code="oracle_scope")
    if samples < 1:
        raise ValidationError(f"样本数必须为正: {samples}", code="bad_samples")
    norm = norm or NormState.identity(n)
    rng = derive_rng(seed, MONTE_CARLO)
    rows_t = instance.rows.T if norm.is_identity else (instance.rows @ norm.inv_sqrt).T

    hits = 0
    remaining = samples
    while remaining > 0:
        count = min(remaining, _MC_CHUNK)
        points = sample_unit_ball(rng, count, n)
        hits += int(np.count_nonzero(np.all(points @ rows_t > 0.0, axis=1)))
        remaining -= count
    p = hits / samples
    return VolumeEstimate(estimate=p, stderr=math.sqrt(p * (1.0 - p) / samples), samples=samples)


def planted_volume_lower_bound(witness: PlantedWitness, n: int) -> float:
    """
    μ(I) 的下界 (ρ/(1+ρ))ⁿ：球 B((1−r)z*, r)，r = ρ/(1+ρ)，位于 P∩B 内。
    """
    r = witness.rho / (1.0 + witness.rho)
    return r ** n


@dataclass(frozen=True)
class BucketPrediction:
    """按特征值二进分桶的精确谱求值结果"""
    case: Optional[CaseTag]
    k: int
    bucket_mass: Dict[int, float]


def bucket_case(z: np.ndarray, N: np.ndarray, K: int, C: Optional[float] = None) -> BucketPrediction:
    """
    暴力谱预言：把 z 的质量按 N/2 的特征值 μ 分入桶 ⌊−log₂μ⌋，
    逐桶精确累加 ⟨z,z_k⟩、⟨z,Nz_k⟩、‖Nz_k‖²，再用与
    approx_eigen_component 相同的判据给出情形。
    """
    C = Config.get_instance().direction.C if C is None else C
    vals, vecs = sym_eig(symmetrize(N))
    half = np.clip(0.5 * vals, 0.0, 0.5)
    weights = (vecs.T @ z) ** 2

    buckets: Dict[int, List[int]] = {}
    for j, mu in enumerate(half):
        key = -1 if mu <= 0.0 else int(math.floor(-math.log2(mu)))
        buckets.setdefault(key, []).append(j)
    bucket_mass = {key: float(np.sum(weights[idx])) for key, idx in sorted(buckets.items())}

    threshold = C / K
    inner_zzk = inner_znzk = norm_sq = 0.0
    for k in range(1, K + 1):
        inner_zzk = inner_znzk = norm_sq = 0.0
        for idx in buckets.values():
            contraction = np.exp(np.log1p(-half[idx]) * 2.0 ** k)
            w = weights[idx]
            inner_zzk += float(np.sum(w * contraction))
            inner_znzk += float(np.sum(w * half[idx] * contraction))
            norm_sq += float(np.sum(w * (half[idx] * contraction) ** 2))
        norm_nzk = math.sqrt(norm_sq)
        if inner_zzk >= threshold and norm_nzk > 0.0 and inner_znzk >= C * norm_nzk / K ** 2:
            return BucketPrediction(case=CaseTag.CASE1, k=k, bucket_mass=bucket_mass)
    if inner_zzk >= threshold and math.sqrt(norm_sq) <= K / 2.0 ** K:
        return BucketPrediction(case=CaseTag.CASE2, k=K, bucket_mass=bucket_mass)
    return BucketPrediction(case=None, k=K, bucket_mass=bucket_mass)


# --- 基准扫描 ---------------------------------------------------------------

@dataclass(frozen=True)
class BenchCell:
    n: int
    m: int
    rho: float
    mode: str
    rescale: str
    seed: int
    max_phases: Optional[int] = None


@dataclass
class BenchRow:
    n: int
    m: int
    rho: float
    mode: str
    rescale: str
    phases: int
    iters: int
    rescales: int
    wall_ms: float
    seed: int
    status: str

    def sort_key(self):
        return (self.mode, self.rescale, self.n, self.m, self.rho, self.seed)


def run_bench_cell(cell: BenchCell) -> BenchRow:
    """运行一个基准格；失败时记录状态而不抛出"""
    start = time.perf_counter()
    phases = iters = rescales = 0
    try:
        instance, _ = generate_planted(cell.n, cell.m, cell.rho, cell.seed)
        cfg = SolveConfig(phase_mode=cell.mode, rescale_mode=cell.rescale, rho_hint=cell.rho,
                          max_phases=cell.max_phases, seed=cell.seed)
        result = solve(instance, cfg)
        phases, iters, rescales = result.phases_used, result.total_iterations, len(result.rescales)
        status = "ok" if result.is_feasible else "exhausted"
    except SolverError as e:
        logger.error(f"基准格 {cell} 失败: {e}")
        status = f"error:{e.code or type(e).__name__}"
    wall_ms = (time.perf_counter() - start) * 1000.0
    return BenchRow(n=cell.n, m=cell.m, rho=cell.rho, mode=cell.mode, rescale=cell.rescale, phases=phases,
                    iters=iters, rescales=rescales, wall_ms=wall_ms, seed=cell.seed, status=status)


def _fit_slope(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    if len(set(x)) < 2:
        return None
    slope, _ = np.polyfit(np.asarray(x, dtype=float), np.asarray(y, dtype=float), 1)
    return float(slope)


def scaling_fits(rows: Iterable[BenchRow]) -> Dict[str, Dict[str, Optional[float]]]:
    """
    每个 (阶段, 重缩放) 组合的对数-对数斜率：
    每阶段迭代数对 n，以及总迭代数对 log(1/ρ)。
    """
    groups: Dict[str, List[BenchRow]] = {}
    for row in rows:
        if row.status == "ok" and row.iters > 0:
            groups.setdefault(f"{row.mode}/{row.rescale}", []).append(row)
    fits = {}
    for key, items in sorted(groups.items()):
        fits[key] = {
            "per_phase_iters_vs_n": _fit_slope([math.log(r.n) for r in items],
                                               [math.log(r.iters / r.phases) for r in items]),
            "iters_vs_log_inv_rho": _fit_slope([math.log(math.log(1.0 / r.rho)) for r in items],
                                               [math.log(r.iters) for r in items]),
        }
    return fits


def phase_count_correlation(rows: Iterable[BenchRow]) -> Optional[float]:
    """阶段数与 ρ 的 Spearman 相关系数"""
    items = [r for r in rows if r.status == "ok"]
    if len({r.rho for r in items}) < 2:
        return None
    corr = stats.spearmanr([r.rho for r in items], [r.phases for r in items])[0]
    return None if np.isnan(corr) else float(corr)


@dataclass
class RunReport:
    """基准运行报告；除计时字段外，同一配置与种子的重跑逐位一致"""
    config: Dict[str, Any]
    rows: List[BenchRow]
    fits: Dict[str, Dict[str, Optional[float]]]
    constants: Dict[str, float]
    environment: Dict[str, Any] = field(default_factory=dict)
    spearman_phases_vs_rho: Optional[float] = None

    def to_document(self, include_timing: bool = True) -> Dict[str, Any]:
        rows = [asdict(r) for r in self.rows]
        environment = dict(self.environment)
        if not include_timing:
            for row in rows:
                row.pop("wall_ms")
            environment.pop("elapsed_s", None)
        return {"config": self.config, "rows": rows, "fits": self.fits, "constants": self.constants,
                "spearman_phases_vs_rho": self.spearman_phases_vs_rho, "environment": environment}

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(BENCH_COLUMNS)
        for row in self.rows:
            writer.writerow([getattr(row, col) for col in BENCH_COLUMNS])
        return buffer.getvalue()

    def write_csv(self, path: Path) -> None:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(self.to_csv(), encoding="utf-8")
        except OSError as e:
            raise FileOperationError(f"写入基准文件 '{path}' 失败: {e}")


def _constants() -> Dict[str, float]:
    phase = Config.get_instance().phase
    direction = Config.get_instance().direction
    rescale = Config.get_instance().rescale
    driver = Config.get_instance().driver
    return {
        "beta_rank1": phase.BETA_RANK1,
        "beta_rank1_derandomized": phase.BETA_RANK1_DERANDOMIZED,
        "beta_multirank": phase.BETA_MULTIRANK,
        "eigen_C": direction.C,
        "K_factor": direction.K_FACTOR,
        "alpha_cap": rescale.ALPHA_CAP,
        "budget_c0": driver.BUDGET_C0,
    }


def bench_cells(ns, ms, rhos, modes, rescales, seeds, max_phases: Optional[int] = None) -> List[BenchCell]:
    cells = [BenchCell(n=n, m=m, rho=rho, mode=mode, rescale=rescale, seed=seed, max_phases=max_phases)
             for n in ns for m in ms for rho in rhos for mode in modes for rescale in rescales for seed in seeds]
    if not cells:
        raise ValidationError("基准参数网格为空", code="empty_grid")
    return cells


async def bench_sweep_async(cells: List[BenchCell], workers: int = 1) -> List[BenchRow]:
    """在工作线程中并行运行各基准格；结果排序后返回"""
    limiter = anyio.CapacityLimiter(max(1, workers))
    rows: List[BenchRow] = []

    async def run(cell: BenchCell) -> None:
        rows.append(await anyio.to_thread.run_sync(run_bench_cell, cell, limiter=limiter))

    async with anyio.create_task_group() as tg:
        for cell in cells:
            tg.start_soon(run, cell)
    return sorted(rows, key=BenchRow.sort_key)


def bench_sweep(
    ns: Sequence[int],
    ms: Sequence[int],
    rhos: Sequence[float],
    modes: Sequence[str],
    rescales: Sequence[str],
    seeds: Sequence[int],
    workers: int = 1,
    max_phases: Optional[int] = None,
) -> RunReport:
    """运行基准网格并拟合标度斜率"""
    cells = bench_cells(ns, ms, rhos, modes, rescales, seeds, max_phases)
    start = time.perf_counter()
    if workers > 1:
        rows = anyio.run(bench_sweep_async, cells, workers)
    else:
        rows = sorted((run_bench_cell(cell) for cell in cells), key=BenchRow.sort_key)
    return build_report(cells, rows, time.perf_counter() - start)


def build_report(cells: List[BenchCell], rows: List[BenchRow], elapsed: float) -> RunReport:
    first = cells[0]
    config = {
        "ns": sorted({c.n for c in cells}),
        "ms": sorted({c.m for c in cells}),
        "rhos": sorted({c.rho for c in cells}),
        "modes": sorted({c.mode for c in cells}),
        "rescales": sorted({c.rescale for c in cells}),
        "seeds": sorted({c.seed for c in cells}),
        "max_phases": first.max_phases,
    }
    failed = sum(1 for r in rows if r.status != "ok")
    if failed:
        logger.warning(f"基准扫描中 {failed}/{len(rows)} 个格未成功")
    environment = {
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "elapsed_s": elapsed,
    }
    return RunReport(config=config, rows=rows, fits=scaling_fits(rows), constants=_constants(),
                     environment=environment, spearman_phases_vs_rho=phase_count_correlation(rows))
