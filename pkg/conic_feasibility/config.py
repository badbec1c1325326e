"""统一的配置管理模块"""

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

from dotenv import load_dotenv

# 加载环境变量（.env 中的 CONIC_* 覆盖默认值）
load_dotenv()

ENV_PREFIX = "CONIC_"


def _env_float(name: str, default: float) -> float:
    value = os.getenv(ENV_PREFIX + name)
    return float(value) if value else default


def _env_int(name: str, default: int) -> int:
    value = os.getenv(ENV_PREFIX + name)
    return int(value) if value else default


@dataclass
class PhaseSettings:
    """初始阶段配置"""
    # 多秩重缩放要求 ‖λA‖ ≤ 1/(10n)
    BETA_MULTIRANK: float = 0.1
    # 秩一重缩放要求 ‖λA‖ ≤ 1/(12n√π)
    BETA_RANK1: float = 1.0 / (12.0 * math.sqrt(math.pi))
    # 去随机化方向只保证 ‖c‖ ≥ 1/(20√n)，需要 ‖λA‖ ≤ 1/(60n)
    BETA_RANK1_DERANDOMIZED: float = 1.0 / 60.0
    LOG_EXPONENT_A: float = 1.0
    SMOOTH_MU0: float = 2.0
    ITERATION_BUDGET_FACTOR: float = 4.0
    MAX_ITERATIONS_CAP: int = 2_000_000


@dataclass
class DirectionSettings:
    """近似特征分量与步长配置"""
    C: float = 1.0 / (2.0 * math.e ** 2)
    K_FACTOR: float = 10.0
    PSI_TOLERANCE: float = 1e-12
    MAX_NON_DECREASE: int = 3
    MAX_STEP_HALVINGS: int = 40
    IDENTITY_RTOL: float = 1e-8


@dataclass
class RescaleSettings:
    """重缩放配置"""
    ALPHA_CAP: float = 8.0
    GAUSSIAN_RETRY_CAP: int = 64
    DERANDOMIZE_GRID: Tuple[float, ...] = (0.0, 0.5, -0.5, 1.0, -1.0, 1.5, -1.5,
                                           2.0, -2.0, 2.5, -2.5, 3.0, -3.0)


@dataclass
class DriverSettings:
    """驱动器配置"""
    BUDGET_C0: float = 8.0
    MAX_PHASES_DEFAULT: int = 10_000


@dataclass
class InstanceSettings:
    """实例生成与序列化配置"""
    PLANTED_RETRY_CAP: int = 10_000
    NORMALIZE_UNDERFLOW: float = 1e-300


@dataclass
class PathSettings:
    """路径相关配置"""
    OUTPUT_DIR: Path = field(
        default_factory=lambda: Path(os.getenv(ENV_PREFIX + "OUTPUT_DIR", ".")) / "outputs"
    )

    def ensure_output_dir(self) -> Path:
        """创建输出目录"""
        self.OUTPUT_DIR.mkdir(parents=True, exist_ok=True)
        return self.OUTPUT_DIR


class Config:
    """全局配置单例类"""
    _instance: Optional['Config'] = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance.phase = PhaseSettings()
            cls._instance.direction = DirectionSettings()
            cls._instance.rescale = RescaleSettings(
                ALPHA_CAP=_env_float("ALPHA_CAP", 8.0),
                GAUSSIAN_RETRY_CAP=_env_int("GAUSSIAN_RETRY_CAP", 64),
            )
            cls._instance.driver = DriverSettings(
                BUDGET_C0=_env_float("BUDGET_C0", 8.0),
                MAX_PHASES_DEFAULT=_env_int("MAX_PHASES", 10_000),
            )
            cls._instance.instance = InstanceSettings()
            cls._instance.path = PathSettings()
            cls._instance.log_level = os.getenv(ENV_PREFIX + "LOG_LEVEL", "WARNING")
        return cls._instance

    @classmethod
    def get_instance(cls) -> 'Config':
        """获取配置单例实例"""
        return cls()
