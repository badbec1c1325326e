"""统一的异常处理模块"""

from typing import Any, Dict, List, Optional


class SolverError(Exception):
    """求解器异常基类"""
    def __init__(self, message: str, code: Optional[str] = None):
        self.message = message
        self.code = code
        self.phase: Optional[int] = None
        super().__init__(message)

    def annotate_phase(self, phase: int) -> 'SolverError':
        """附加出错的阶段编号"""
        if self.phase is None:
            self.phase = phase
            self.message = f"[阶段 {phase}] {self.message}"
            self.args = (self.message,)
        return self


class ValidationError(SolverError):
    """输入或参数验证错误"""
    pass


class ConfigurationError(SolverError):
    """配置错误"""
    pass


class FileOperationError(SolverError):
    """文件操作错误"""
    pass


class PreconditionError(SolverError):
    """重缩放前提条件不满足"""
    def __init__(self, message: str, measured: float, bound: float, code: Optional[str] = None):
        super().__init__(message, code)
        self.measured = measured
        self.bound = bound


class NumericalBreakdownError(SolverError):
    """数值崩溃：循环内断言失败或正定性丢失"""
    pass


class SamplingError(SolverError):
    """采样失败（拒绝采样超限或蒙特卡洛无接受样本）"""
    pass


class DirectionSearchError(SolverError):
    """方向搜索失败"""
    def __init__(
        self,
        message: str,
        table: Optional[List[Dict[str, float]]] = None,
        vector: Optional[Any] = None,
        code: Optional[str] = None,
    ):
        super().__init__(message, code)
        self.table = table or []
        self.vector = vector
