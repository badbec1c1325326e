"""范数状态：对称正定矩阵 H 定义的范数 ‖·‖_H 及其对偶范数 ‖·‖_{H⁻¹}"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .linalg import sym_eig, symmetrize
from .exceptions import NumericalBreakdownError


@dataclass(frozen=True, eq=False)
class NormState:
    """
    范数状态。

    H 的形式为 I + Σ h_i Â_iÂ_iᵀ，其中 Â_i 为原始行；coefficients 记录 h_i，
    只需 O(m) 空间即可重建 H。H 在重缩放之间不变，分解结果按实例缓存。
    """
    H: np.ndarray
    coefficients: Optional[np.ndarray] = None
    updates: int = field(default=0)

    @classmethod
    def identity(cls, n: int, m: Optional[int] = None) -> 'NormState':
        """欧氏范数"""
        coeffs = np.zeros(m) if m is not None else None
        return cls(H=np.eye(n), coefficients=coeffs)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @cached_property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.H, np.eye(self.n)))

    @cached_property
    def _eig(self):
        vals, vecs = sym_eig(self.H)
        if vals[0] <= 0.0:
            raise NumericalBreakdownError(
                f"范数矩阵 H 不是正定的，最小特征值 {vals[0]:.3e}", code="not_spd"
            )
        return vals, vecs

    @cached_property
    def min_eigenvalue(self) -> float:
        return float(self._eig[0][0])

    @cached_property
    def sqrt(self) -> np.ndarray:
        """H^{1/2}"""
        vals, vecs = self._eig
        return symmetrize((vecs * np.sqrt(vals)) @ vecs.T)

    @cached_property
    def inv_sqrt(self) -> np.ndarray:
        """H^{-1/2}"""
        vals, vecs = self._eig
        return symmetrize((vecs / np.sqrt(vals)) @ vecs.T)

    @cached_property
    def inv(self) -> np.ndarray:
        """H^{-1}"""
        vals, vecs = self._eig
        return symmetrize((vecs / vals) @ vecs.T)

    def primal_norm(self, x: np.ndarray) -> float:
        """‖x‖_H"""
        return float(np.sqrt(max(x @ self.H @ x, 0.0)))

    def dual_norm(self, v: np.ndarray) -> float:
        """‖v‖_{H⁻¹}"""
        if self.is_identity:
            return float(np.linalg.norm(v))
        return float(np.linalg.norm(self.inv_sqrt @ v))

    def dual_row_norms(self, rows: np.ndarray) -> np.ndarray:
        """每一行的 ‖A_i‖_{H⁻¹}"""
        if self.is_identity:
            return np.linalg.norm(rows, axis=1)
        return np.linalg.norm(rows @ self.inv_sqrt, axis=1)

    def dual_inner(self, u: np.ndarray, v: np.ndarray) -> float:
        """⟨u, v⟩_{H⁻¹}"""
        if self.is_identity:
            return float(u @ v)
        return float(u @ self.inv @ v)

    def reconstruct(self, original_rows: np.ndarray) -> np.ndarray:
        """由系数记录重建 I + Σ h_i Â_iÂ_iᵀ"""
        if self.coefficients is None:
            raise ValueError("该范数状态没有系数记录")
        return np.eye(self.n) + (original_rows.T * self.coefficients) @ original_rows
