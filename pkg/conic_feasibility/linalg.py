"""稠密对称矩阵工具：基于特征分解的矩阵幂、算子范数与对偶范数"""

from typing import Callable, Tuple

import numpy as np
from scipy import linalg

from .exceptions import NumericalBreakdownError


def symmetrize(mat: np.ndarray) -> np.ndarray:
    """取 (M + Mᵀ)/2 以消除舍入造成的不对称"""
    return 0.5 * (mat + mat.T)


def sym_eig(mat: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """对称特征分解，特征值升序"""
    return linalg.eigh(symmetrize(mat))


def sym_transform(mat: np.ndarray, xfm: Callable[[np.ndarray], np.ndarray], spd: bool = True) -> np.ndarray:
    """
    对对称矩阵的谱施加函数 xfm，返回 Q diag(xfm(L)) Qᵀ。

    Args:
        mat: 对称矩阵
        xfm: 作用在特征值上的函数
        spd: 为真时要求矩阵正定

    Raises:
        NumericalBreakdownError: spd 为真但最小特征值不为正
    """
    vals, vecs = sym_eig(mat)
    if spd and vals[0] <= 0.0:
        raise NumericalBreakdownError(
            f"矩阵不是正定的，最小特征值 {vals[0]:.3e}", code="not_spd"
        )
    return symmetrize((vecs * xfm(vals)) @ vecs.T)


def sym_sqrt(mat: np.ndarray) -> np.ndarray:
    return sym_transform(mat, np.sqrt)


def sym_inv_sqrt(mat: np.ndarray) -> np.ndarray:
    return sym_transform(mat, lambda v: 1.0 / np.sqrt(v))


def op_norm(mat: np.ndarray) -> float:
    """对称半正定矩阵的算子范数（最大特征值）"""
    vals = linalg.eigvalsh(symmetrize(mat))
    return float(max(abs(vals[0]), abs(vals[-1])))


def log_det_spd(mat: np.ndarray) -> float:
    """正定矩阵的对数行列式"""
    vals = linalg.eigvalsh(symmetrize(mat))
    if vals[0] <= 0.0:
        raise NumericalBreakdownError(
            f"行列式计算时矩阵失去正定性，最小特征值 {vals[0]:.3e}", code="not_spd"
        )
    return float(np.sum(np.log(vals)))


def is_psd(mat: np.ndarray, tol: float = 1e-12) -> bool:
    vals = linalg.eigvalsh(symmetrize(mat))
    return bool(vals[0] >= -tol * max(1.0, abs(vals[-1])))
