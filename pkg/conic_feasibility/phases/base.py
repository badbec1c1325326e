"""初始阶段基类和工厂模块"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        def __str__(self) -> str:
            return str(self.value)

        def __format__(self, format_spec: str) -> str:
            return str(self.value).__format__(format_spec)
from typing import Any, Dict, Optional, Type

import numpy as np

from ..config import Config
from ..exceptions import ConfigurationError, NumericalBreakdownError, SolverError, ValidationError
from ..instance import ConeInstance
from ..norm import NormState
from ..trace import TraceRecorder


class PhaseMode(StrEnum):
    """初始阶段类型"""
    CLASSICAL = "classical"
    SMOOTH = "smooth"
    MWU_STANDARD = "mwu"
    MWU_MODIFIED = "mwu-fast"


class OutcomeKind(StrEnum):
    """阶段结果类型"""
    FEASIBLE = "feasible"
    EVIDENCE = "evidence"
    EXHAUSTED = "exhausted"


@dataclass
class PhaseConfig:
    """初始阶段配置"""
    delta: float
    mode: PhaseMode = PhaseMode.MWU_MODIFIED
    max_iters: Optional[int] = None
    log_exponent_a: Optional[float] = None
    # 0 表示 Φ < 1；−1 表示 Φ < 1/e
    termination_phi_log: float = 0.0
    # 固定步长的标准梯度下降（None 时步长为 ½）
    fixed_step: Optional[float] = None
    phase_index: int = 0

    def __post_init__(self):
        if not self.delta > 0.0:
            raise ConfigurationError(f"delta 必须为正: {self.delta}")
        if self.max_iters is not None and self.max_iters < 1:
            raise ConfigurationError(f"max_iters 必须至少为 1: {self.max_iters}")
        if self.fixed_step is not None and not 0.0 < self.fixed_step <= 0.5:
            raise ConfigurationError(f"固定步长必须在 (0, ½] 内: {self.fixed_step}")
        if self.log_exponent_a is None:
            self.log_exponent_a = Config.get_instance().phase.LOG_EXPONENT_A

    def iteration_budget(self, m: int) -> int:
        """迭代预算；未显式给出时按标准下降的最坏情形估计"""
        if self.max_iters is not None:
            return self.max_iters
        settings = Config.get_instance().phase
        step = self.fixed_step if self.fixed_step is not None else 0.5
        start_gap = math.log(m) - self.termination_phi_log + 1.0
        budget = settings.ITERATION_BUDGET_FACTOR * start_gap / (4.0 * step * (1.0 - step) * self.delta ** 2)
        return int(min(math.ceil(budget), settings.MAX_ITERATIONS_CAP))


@dataclass
class PhaseOutcome:
    """
    阶段结果：可行点（工作坐标）、对偶证据或预算耗尽。

    steps 是实际执行的更新次数，即终止判定时的 T。
    """
    kind: OutcomeKind
    iterations: int
    x: Optional[np.ndarray] = None
    lambda_: Optional[np.ndarray] = None
    evidence_norm: Optional[float] = None
    steps: int = 0
    stats: Dict[str, Any] = field(default_factory=dict)

    @property
    def is_feasible(self) -> bool:
        return self.kind == OutcomeKind.FEASIBLE


class BasePhase(ABC):
    """初始阶段基类：要么找到 x ∈ P，要么给出 ‖λA‖ 很小的凸组合 λ"""

    name: str = ""

    def __init__(self):
        self.config = Config.get_instance()
        self.logger = logging.getLogger(self.__class__.__name__)

    @abstractmethod
    def execute(
        self,
        instance: ConeInstance,
        cfg: PhaseConfig,
        norm: NormState,
        recorder: Optional[TraceRecorder],
    ) -> PhaseOutcome:
        """执行阶段主循环"""
        pass

    def validate_params(self, instance: ConeInstance, cfg: PhaseConfig, norm: NormState) -> None:
        """验证前提：行已按对偶范数归一化"""
        if norm.n != instance.n:
            raise ValidationError(f"范数维数 {norm.n} 与实例维数 {instance.n} 不符", code="dimension_mismatch")
        dual = norm.dual_row_norms(instance.rows)
        if np.max(np.abs(dual - 1.0)) > 1e-9:
            raise ValidationError("行没有按当前对偶范数归一化", code="not_normalized")

    def __call__(
        self,
        instance: ConeInstance,
        cfg: PhaseConfig,
        norm: Optional[NormState] = None,
        recorder: Optional[TraceRecorder] = None,
    ) -> PhaseOutcome:
        """运行阶段，并独立复核返回结果"""
        norm = norm or NormState.identity(instance.n)
        try:
            self.logger.debug(f"运行阶段 {self.name}: delta={cfg.delta:.4e}, n={instance.n}, m={instance.m}")
            self.validate_params(instance, cfg, norm)
            outcome = self.execute(instance, cfg, norm, recorder)
            self._recheck(instance, cfg, norm, outcome)
            self.logger.info(
                f"阶段 {cfg.phase_index} ({self.name}) 结束: {outcome.kind.value}, 迭代 {outcome.iterations}"
            )
            return outcome
        except SolverError as e:
            self.logger.error(f"阶段执行错误: {e}")
            raise

    def _recheck(self, instance: ConeInstance, cfg: PhaseConfig, norm: NormState, outcome: PhaseOutcome) -> None:
        if outcome.kind == OutcomeKind.FEASIBLE:
            margin = float(np.min(instance.rows @ outcome.x))
            if not margin > 0.0:
                raise NumericalBreakdownError(f"阶段声称可行但最小间隔为 {margin!r}", code="not_strict")
        elif outcome.kind == OutcomeKind.EVIDENCE:
            lam = outcome.lambda_
            if np.any(lam < 0.0) or abs(float(np.sum(lam)) - 1.0) > 1e-12:
                raise NumericalBreakdownError("对偶证据的 λ 不是凸组合", code="not_simplex")
            measured = norm.dual_norm(lam @ instance.rows)
            if measured > cfg.delta + 1e-12:
                raise NumericalBreakdownError(
                    f"对偶证据 ‖λA‖={measured!r} 超过 delta={cfg.delta!r}", code="evidence_norm"
                )
            outcome.evidence_norm = measured

    @staticmethod
    def _evidence(lam: np.ndarray, iterations: int, steps: int, **stats: Any) -> PhaseOutcome:
        lam = np.maximum(lam, 0.0)
        lam = lam / np.sum(lam)
        return PhaseOutcome(kind=OutcomeKind.EVIDENCE, iterations=iterations, lambda_=lam,
                            steps=steps, stats=dict(stats))


class PhaseFactory:
    """阶段工厂类"""

    _phases: Dict[str, Type[BasePhase]] = {}

    @classmethod
    def register(cls, phase_class: Type[BasePhase]) -> Type[BasePhase]:
        """注册阶段类"""
        cls._phases[phase_class.name] = phase_class
        return phase_class

    @classmethod
    def create(cls, name: str) -> BasePhase:
        """创建阶段实例"""
        if name not in cls._phases:
            raise ConfigurationError(f"未知的初始阶段: {name}")
        return cls._phases[name]()

    @classmethod
    def available(cls):
        return sorted(cls._phases)
