"""严格锥可行性求解器：乘性权重初始阶段 + 秩一/多秩重缩放"""

__version__ = "0.1.0"

from .driver import Roundedness, SolveConfig, SolveResult, john_ellipsoid, roundedness_check, solve
from .exceptions import (
    ConfigurationError,
    DirectionSearchError,
    FileOperationError,
    NumericalBreakdownError,
    PreconditionError,
    SamplingError,
    SolverError,
    ValidationError,
)
from .instance import (
    BudgetExhausted,
    ConeInstance,
    DualEvidence,
    Feasible,
    TransformLog,
    generate_planted,
    load_instance,
    normalize_rows,
    pull_back,
    save_instance,
    verify_certificate,
    working_instance,
)
from .norm import NormState
from .phases import PhaseConfig, PhaseMode, run_phase
from .rescaler import RescaleKind

__all__ = [
    "__version__",
    "ConeInstance",
    "TransformLog",
    "Feasible",
    "DualEvidence",
    "BudgetExhausted",
    "NormState",
    "PhaseConfig",
    "PhaseMode",
    "RescaleKind",
    "SolveConfig",
    "SolveResult",
    "Roundedness",
    "generate_planted",
    "load_instance",
    "save_instance",
    "normalize_rows",
    "pull_back",
    "working_instance",
    "verify_certificate",
    "run_phase",
    "solve",
    "john_ellipsoid",
    "roundedness_check",
    "SolverError",
    "ValidationError",
    "ConfigurationError",
    "FileOperationError",
    "PreconditionError",
    "NumericalBreakdownError",
    "SamplingError",
    "DirectionSearchError",
]
