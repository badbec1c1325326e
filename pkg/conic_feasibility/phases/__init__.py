"""初始阶段：经典感知机、光滑感知机、标准与改进乘性权重下降"""

from .base import BasePhase, OutcomeKind, PhaseConfig, PhaseFactory, PhaseMode, PhaseOutcome
from .classical import ClassicalPerceptronPhase
from .mwu import MwuModifiedPhase, MwuStandardPhase
from .smooth import SmoothPerceptronPhase


def run_phase(instance, cfg: PhaseConfig, norm=None, recorder=None) -> PhaseOutcome:
    """按 cfg.mode 创建阶段并运行"""
    return PhaseFactory.create(PhaseMode(cfg.mode).value)(instance, cfg, norm, recorder)


__all__ = [
    "BasePhase",
    "OutcomeKind",
    "PhaseConfig",
    "PhaseFactory",
    "PhaseMode",
    "PhaseOutcome",
    "ClassicalPerceptronPhase",
    "SmoothPerceptronPhase",
    "MwuStandardPhase",
    "MwuModifiedPhase",
    "run_phase",
]
