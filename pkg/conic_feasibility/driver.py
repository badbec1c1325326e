"""
驱动器：阶段循环、按重缩放方式选择 Δ、预算控制、证书组装，以及近似 John 椭球。

三种视角在一次运行中只启用一种：
    rank1      变换锥，H 始终为 I
    multirank  变换锥，H 始终为 I
    norm       原始行不动，H 逐步增大
"""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from .config import Config
from .exceptions import ConfigurationError, NumericalBreakdownError, SolverError
from .instance import (
    BudgetExhausted,
    Certificate,
    ConeInstance,
    Feasible,
    TransformLog,
    certificate_to_document,
    normalize_rows,
    pull_back,
    verify_certificate,
)
from .norm import NormState
from .phases import OutcomeKind, PhaseConfig, PhaseMode, PhaseOutcome, run_phase
from .rescaler import (
    RescaleKind,
    RescaleReport,
    derandomized_direction,
    gaussian_subset_direction,
    multirank_rescale,
    norm_update,
    rank1_rescale,
)
from .seeding import GAUSSIAN_DIRECTION, derive_rng
from .trace import TraceRecorder

logger = logging.getLogger(__name__)

_MWU_PHASES = (PhaseMode.MWU_STANDARD, PhaseMode.MWU_MODIFIED)


@dataclass
class SolveConfig:
    """求解配置"""
    phase_mode: PhaseMode = PhaseMode.MWU_MODIFIED
    rescale_mode: RescaleKind = RescaleKind.MULTI_RANK
    rho_hint: Optional[float] = None
    max_phases: Optional[int] = None
    seed: int = 0
    # 0 表示 Φ < 1；−1 表示 Φ < 1/e
    termination_phi_log: float = 0.0
    derandomize: bool = False
    fixed_step_variant: bool = False
    max_iters_per_phase: Optional[int] = None
    alpha_cap: Optional[float] = None
    trace_path: Optional[Path] = None
    keep_trace_steps: bool = False

    def __post_init__(self):
        self.phase_mode = PhaseMode(self.phase_mode)
        self.rescale_mode = RescaleKind(self.rescale_mode)
        if self.max_phases is not None and self.max_phases < 1:
            raise ConfigurationError(f"max_phases 必须至少为 1: {self.max_phases}")
        if self.rho_hint is not None and not 0.0 < self.rho_hint < 1.0:
            raise ConfigurationError(f"rho_hint 必须在 (0, 1) 内: {self.rho_hint}")
        if self.termination_phi_log not in (0.0, -1.0):
            raise ConfigurationError(f"termination_phi_log 只能取 0 或 −1: {self.termination_phi_log}")
        if self.phase_mode == PhaseMode.CLASSICAL and self.rescale_mode == RescaleKind.NORM_UPDATE:
            raise ConfigurationError("经典感知机只支持欧氏范数，不能与范数更新组合")
        if self.fixed_step_variant and self.phase_mode != PhaseMode.MWU_STANDARD:
            raise ConfigurationError("固定步长变体只适用于标准乘性权重阶段 (mwu)")
        if self.derandomize and self.rescale_mode != RescaleKind.RANK1:
            raise ConfigurationError("去随机化方向只用于秩一重缩放")

    def phase_budget(self, n: int) -> int:
        """阶段预算：显式 max_phases 优先，其次 ⌈c₀·n·ln(1/ρ)⌉，否则取默认上限"""
        if self.max_phases is not None:
            return self.max_phases
        settings = Config.get_instance().driver
        if self.rho_hint is not None:
            return max(1, int(math.ceil(settings.BUDGET_C0 * n * math.log(1.0 / self.rho_hint))))
        return settings.MAX_PHASES_DEFAULT

    def delta(self, n: int) -> float:
        """rank1: 1/(12n√π)（去随机化时 1/(60n)）；multirank / norm: 1/(10n)"""
        settings = Config.get_instance().phase
        if self.rescale_mode == RescaleKind.RANK1:
            beta = settings.BETA_RANK1_DERANDOMIZED if self.derandomize else settings.BETA_RANK1
        else:
            beta = settings.BETA_MULTIRANK
        return beta / n


@dataclass
class Roundedness:
    """
    最终坐标下 B(z, 1/T) ⊆ P∩B ⊆ B(z, 1 + ‖z‖)，以及回拉到原始坐标的内椭球。
    """
    z: np.ndarray
    T: int
    inner_radius: float
    outer_radius_bound: float
    ratio: float
    passed: bool
    inner_center: np.ndarray
    inner_shape: np.ndarray

    def to_document(self) -> Dict[str, Any]:
        return {
            "z": [float(v) for v in self.z],
            "T": self.T,
            "inner_radius": self.inner_radius,
            "outer_radius_bound": self.outer_radius_bound,
            "ratio": self.ratio,
            "passed": self.passed,
            "inner_ellipsoid": {
                "center": [float(v) for v in self.inner_center],
                "shape": [[float(v) for v in row] for row in self.inner_shape],
            },
        }


@dataclass
class SolveResult:
    """求解结果"""
    certificate: Certificate
    phases_used: int
    total_iterations: int
    transform_log: TransformLog
    norm: NormState
    delta: float
    budget: int
    rescales: List[RescaleReport] = field(default_factory=list)
    phase_summaries: List[Dict[str, Any]] = field(default_factory=list)
    trace_path: Optional[Path] = None
    roundedness: Optional[Roundedness] = None
    final_instance: Optional[ConeInstance] = None
    final_outcome: Optional[PhaseOutcome] = None

    @property
    def is_feasible(self) -> bool:
        return isinstance(self.certificate, Feasible)

    @property
    def volume_log_growth(self) -> float:
        """各次重缩放 det_growth_log 之和"""
        return float(sum(r.det_growth_log for r in self.rescales))

    def to_document(self) -> Dict[str, Any]:
        doc = certificate_to_document(self.certificate, self.transform_log)
        doc["solve"] = {
            "phases_used": self.phases_used,
            "total_iterations": self.total_iterations,
            "rescales": len(self.rescales),
            "delta": self.delta,
            "budget": self.budget,
            "volume_log_growth": self.volume_log_growth,
            "norm_updates": self.norm.updates,
            "case2_unverified": sum(s["case2_unverified"] for s in self.phase_summaries),
        }
        if self.norm.coefficients is not None and self.norm.updates:
            doc["solve"]["norm_coefficients"] = [float(v) for v in self.norm.coefficients]
        if self.trace_path is not None:
            doc["solve"]["trace_file"] = str(self.trace_path)
        if self.roundedness is not None:
            doc["roundedness"] = self.roundedness.to_document()
        return doc


class Solver:
    """阶段循环：初始阶段给出可行点则回拉返回，给出对偶证据则重缩放后继续"""

    def __init__(self, cfg: SolveConfig):
        self.cfg = cfg
        self.logger = logging.getLogger(self.__class__.__name__)

    def _phase_config(self, n: int, m: int, index: int) -> PhaseConfig:
        cfg = self.cfg
        fixed_step = None
        termination = cfg.termination_phi_log
        if cfg.fixed_step_variant:
            fixed_step = min(1.0 / n, 0.5)
            termination = min(termination, -math.log(m))
        return PhaseConfig(delta=cfg.delta(n), mode=cfg.phase_mode, max_iters=cfg.max_iters_per_phase,
                           termination_phi_log=termination, fixed_step=fixed_step,
                           phase_index=index)

    def _rescale(self, instance: ConeInstance, norm: NormState, log: TransformLog,
                 outcome: PhaseOutcome, rng: np.random.Generator):
        lam = outcome.lambda_
        mode = self.cfg.rescale_mode
        if mode == RescaleKind.RANK1:
            if self.cfg.derandomize:
                thin = derandomized_direction(instance, lam)
            else:
                thin = gaussian_subset_direction(instance, lam, rng)
            instance, step, report = rank1_rescale(instance, thin.c, lam)
            report.extras.update({"method": thin.method.value, "draws": thin.draws})
            return instance, norm, log.append(step), report
        if mode == RescaleKind.MULTI_RANK:
            instance, step, report = multirank_rescale(instance, lam, self.cfg.alpha_cap)
            return instance, norm, log.append(step), report
        instance, norm, report = norm_update(norm, lam, instance, self.cfg.alpha_cap)
        return instance, norm, log, report

    def run(self, instance: ConeInstance) -> SolveResult:
        cfg = self.cfg
        n, m = instance.n, instance.m
        budget = cfg.phase_budget(n)
        delta = cfg.delta(n)
        rng = derive_rng(cfg.seed, GAUSSIAN_DIRECTION)
        norm = NormState.identity(n, m)
        log = TransformLog()
        rescales: List[RescaleReport] = []
        summaries: List[Dict[str, Any]] = []
        total_iterations = 0
        outcome: Optional[PhaseOutcome] = None
        working = instance

        self.logger.info(f"开始求解: n={n}, m={m}, 阶段={cfg.phase_mode.value}, "
                         f"重缩放={cfg.rescale_mode.value}, delta={delta:.4e}, 预算={budget}")
        with TraceRecorder(path=cfg.trace_path, keep_steps=cfg.keep_trace_steps) as recorder:
            for index in range(budget):
                try:
                    working = normalize_rows(working, norm)
                    outcome = run_phase(working, self._phase_config(n, m, index), norm, recorder)
                    total_iterations += outcome.iterations
                    summaries.append({"phase": index, "kind": outcome.kind.value,
                                      "iterations": outcome.iterations,
                                      "evidence_norm": outcome.evidence_norm,
                                      "case2_unverified": outcome.stats.get("case2_unverified", 0)})
                    recorder.record(phase=index, iter=outcome.iterations, mode=cfg.phase_mode.value,
                                    norm_y_dual=outcome.evidence_norm, event="phase")

                    if outcome.kind == OutcomeKind.FEASIBLE:
                        x = pull_back(outcome.x, log)
                        certificate = Feasible(x=x)
                        report = verify_certificate(instance, certificate)
                        if not report.passed:
                            raise NumericalBreakdownError(
                                f"回拉后的点未通过验证: {report.message}", code="pullback"
                            )
                        self.logger.info(f"在第 {index} 阶段找到可行点，共重缩放 {len(rescales)} 次")
                        return SolveResult(certificate=certificate, phases_used=index + 1,
                                           total_iterations=total_iterations, transform_log=log, norm=norm,
                                           delta=delta, budget=budget, rescales=rescales,
                                           phase_summaries=summaries, trace_path=cfg.trace_path,
                                           final_instance=working, final_outcome=outcome)
                    if outcome.kind == OutcomeKind.EXHAUSTED:
                        break

                    working, norm, log, rescale = self._rescale(working, norm, log, outcome, rng)
                    rescales.append(rescale)
                    recorder.record(phase=index, iter=outcome.iterations, mode=cfg.rescale_mode.value,
                                    alpha=rescale.alpha, det_growth_log=rescale.det_growth_log,
                                    rescale=rescale.to_document(), event="rescale")
                except SolverError as e:
                    raise e.annotate_phase(index)

        phases_used = len(summaries)
        self.logger.warning(f"预算耗尽: {phases_used} 个阶段后仍未找到可行点")
        certificate = BudgetExhausted(summary={
            "phases_used": phases_used,
            "budget": budget,
            "rescales": len(rescales),
            "last_phase": outcome.kind.value if outcome is not None else None,
            "last_evidence_norm": outcome.evidence_norm if outcome is not None else None,
            "reason": "likely infeasible or rho below threshold",
        })
        return SolveResult(certificate=certificate, phases_used=phases_used, total_iterations=total_iterations,
                           transform_log=log, norm=norm, delta=delta, budget=budget, rescales=rescales,
                           phase_summaries=summaries, trace_path=cfg.trace_path,
                           final_instance=working, final_outcome=outcome)


def solve(instance: ConeInstance, cfg: Optional[SolveConfig] = None) -> SolveResult:
    """求解 {x : Ax > 0}"""
    return Solver(cfg or SolveConfig()).run(instance)


def roundedness_check(rows: np.ndarray, z: np.ndarray, T: float) -> bool:
    """⟨A_i,z⟩ ≥ 1/T − 1e-12 对所有 i 成立且 ‖z‖ ≤ ½ + 1e-12"""
    margins = rows @ z
    return bool(np.all(margins >= 1.0 / T - 1e-12) and np.linalg.norm(z) <= 0.5 + 1e-12)


def john_ellipsoid(instance: ConeInstance, cfg: Optional[SolveConfig] = None) -> SolveResult:
    """
    以 Φ < 1/e 终止求解，并由最后一个阶段的 x^(T) 给出 z = x^(T)/T。

    范数视角下使用坐标 x' = H^{1/2}x 与行 A' = AH^{-1/2}，二者都是欧氏单位行。

    Raises:
        ConfigurationError: 初始阶段不是乘性权重阶段
    """
    cfg = replace(cfg or SolveConfig(), termination_phi_log=-1.0)
    if cfg.phase_mode not in _MWU_PHASES:
        raise ConfigurationError(f"John 椭球只支持乘性权重阶段，收到 {cfg.phase_mode.value}")

    result = solve(instance, cfg)
    if not result.is_feasible:
        return result

    outcome = result.final_outcome
    T = outcome.steps
    if result.norm.is_identity:
        rows = result.final_instance.rows
        x_final = outcome.x
        G = result.transform_log.pullback_matrix(instance.n)
    else:
        rows = result.final_instance.rows @ result.norm.inv_sqrt
        x_final = result.norm.sqrt @ outcome.x
        G = result.norm.inv_sqrt

    z = x_final / T
    z_norm = float(np.linalg.norm(z))
    passed = roundedness_check(rows, z, T)
    if not passed:
        logger.warning(f"圆度检查未通过: T={T}, ‖z‖={z_norm:.4e}, 最小间隔 {float(np.min(rows @ z)):.4e}")
    result.roundedness = Roundedness(
        z=z, T=T, inner_radius=1.0 / T, outer_radius_bound=1.0 + z_norm,
        ratio=(1.0 + z_norm) * T, passed=passed,
        inner_center=G @ z, inner_shape=G @ G.T / T ** 2,
    )
    logger.info(f"John 椭球: T={T}, 比例 {(1.0 + z_norm) * T:.3f}")
    return result
