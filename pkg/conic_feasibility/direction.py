"""方向搜索模块：把 y 投影到 M 的显著特征子空间上，并给出对应的步长"""

import logging
import math
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
from typing import Dict, Iterator, List, Optional

import numpy as np

from .config import Config
from .exceptions import DirectionSearchError, NumericalBreakdownError, ValidationError
from .linalg import sym_eig, symmetrize
from .norm import NormState
from .potential import SecondMoment

logger = logging.getLogger(__name__)

_EPS = float(np.finfo(float).eps)


class CaseTag(StrEnum):
    """近似特征分量满足的情形"""
    CASE1 = "case1"
    CASE2 = "case2"


@dataclass(frozen=True, eq=False)
class EigenComponentResult:
    """
    近似特征分量结果。

    各标量都针对减半后的 N 计算（N ← N/2）。
    """
    k: int
    z_k: np.ndarray
    case: CaseTag
    inner_zzk: float
    inner_znzk: float
    norm_nzk: float
    K: int
    C: float
    table: List[Dict[str, float]] = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class Direction:
    """更新方向 p 以及证明中的四个恒等量"""
    p: np.ndarray
    eigen: EigenComponentResult
    norm_p_h: float
    norm_mp_dual: float
    inner_yp: float
    inner_ymp_dual: float
    case2_small_enough: bool = True


def log_factor(n: int) -> float:
    """log₂(n+2)，避免小 n 时 log 1 = 0"""
    return math.log2(n + 2)


def default_K(n: int) -> int:
    """K = ⌈10·log₂(n+2)⌉"""
    return int(math.ceil(Config.get_instance().direction.K_FACTOR * log_factor(n)))


def _safe_squarings(n: int) -> int:
    """显式平方的舍入误差约按 2^k·n·ε 增长，超过该层数后改用谱求值"""
    return max(1, int(math.floor(math.log2(1e-9 / (max(n, 1) * _EPS)))))


def squared_powers(N_half: np.ndarray, K: int) -> Iterator[np.ndarray]:
    """显式矩阵平方：P_1 = (I−N)², P_k = P_{k−1}²，依次产出 P_1, …, P_K"""
    P = np.eye(N_half.shape[0]) - N_half
    for _ in range(K):
        P = symmetrize(P @ P)
        yield P


def approx_eigen_component(
    z: np.ndarray,
    N: np.ndarray,
    K: int,
    C: Optional[float] = None,
) -> EigenComponentResult:
    """
    计算 z_k = (I−N/2)^{2^k} z，返回第一个满足情形 1 的 k，否则在 k=K 检查情形 2。

    情形 1：⟨z,z_k⟩ ≥ C/K，‖Nz_k‖ > 0 且 ⟨z,Nz_k⟩ ≥ C‖Nz_k‖/K²
    情形 2：⟨z,z_K⟩ ≥ C/K 且 ‖Nz_K‖ ≤ K/2^K

    前若干层用显式平方；舍入误差可能放大时改为由 N 的特征分解直接求同一幂次。

    Raises:
        ValidationError: z 不是单位向量或 N 不满足前提
        DirectionSearchError: 两种情形都不成立（携带完整的 k 表）
    """
    C = Config.get_instance().direction.C if C is None else C
    n = z.size
    if abs(float(np.linalg.norm(z)) - 1.0) > 1e-9:
        raise ValidationError("z 必须是单位向量", code="not_unit")
    if K < 1:
        raise ValidationError(f"K={K} 必须为正", code="bad_k")
    N = symmetrize(N)
    vals, vecs = sym_eig(N)
    if vals[0] < -1e-9 or vals[-1] > 1.0 + 1e-9:
        raise ValidationError(f"N 的谱 [{vals[0]:.3e}, {vals[-1]:.3e}] 不在 [0, 1] 内", code="bad_spectrum")

    N_half = 0.5 * N
    half_vals = np.clip(0.5 * vals, 0.0, 0.5)
    log_contraction = np.log1p(-half_vals)
    z_coeffs = vecs.T @ z
    safe = _safe_squarings(n)

    powers = squared_powers(N_half, min(safe, K))
    table: List[Dict[str, float]] = []
    threshold = C / K
    for k in range(1, K + 1):
        if k <= safe:
            z_k = next(powers) @ z
        else:
            z_k = vecs @ (np.exp(log_contraction * 2.0 ** k) * z_coeffs)
        nz_k = N_half @ z_k
        inner_zzk = float(z @ z_k)
        inner_znzk = float(z @ nz_k)
        norm_nzk = float(np.linalg.norm(nz_k))
        table.append({"k": k, "inner_zzk": inner_zzk, "inner_znzk": inner_znzk, "norm_nzk": norm_nzk})

        if inner_zzk >= threshold and norm_nzk > 0.0 and inner_znzk >= C * norm_nzk / K ** 2:
            return EigenComponentResult(k=k, z_k=z_k, case=CaseTag.CASE1, inner_zzk=inner_zzk,
                                        inner_znzk=inner_znzk, norm_nzk=norm_nzk, K=K, C=C, table=table)

    if inner_zzk >= threshold and norm_nzk <= K / 2.0 ** K:
        return EigenComponentResult(k=K, z_k=z_k, case=CaseTag.CASE2, inner_zzk=inner_zzk,
                                    inner_znzk=inner_znzk, norm_nzk=norm_nzk, K=K, C=C, table=table)

    logger.error(f"近似特征分量两种情形都不成立: K={K}, C={C:.4e}")
    raise DirectionSearchError(
        f"近似特征分量在 K={K}、C={C:.4e} 下两种情形都不成立", table=table, code="no_case"
    )


def _close(a: float, b: float, rtol: float) -> bool:
    return abs(a - b) <= rtol * max(abs(a), abs(b)) + 1e-14


def choose_direction(
    y: np.ndarray,
    moment: SecondMoment,
    norm: NormState,
    K: Optional[int] = None,
) -> Direction:
    """
    令 z = H^{-1/2}y/‖y‖_{H⁻¹}、N = H^{-1/2}MH^{-1/2}，取 p = H^{-1/2}z_k。

    保证 ‖p‖_H = ‖z_k‖₂ ≤ 1，并逐一核对证明中的四个恒等式。

    Raises:
        ValidationError: ‖y‖_{H⁻¹} = 0
        NumericalBreakdownError: 恒等式在 1e-8 相对容差下不成立
        DirectionSearchError: 由 approx_eigen_component 传出
    """
    settings = Config.get_instance().direction
    n = y.size
    K = default_K(n) if K is None else K
    y_norm = norm.dual_norm(y)
    if y_norm <= 0.0:
        raise ValidationError("‖y‖_(H⁻¹) 必须为正", code="zero_gradient")

    W = norm.inv_sqrt
    z = W @ y / y_norm
    z /= np.linalg.norm(z)
    N = symmetrize(W @ moment.M @ W)
    eigen = approx_eigen_component(z, N, K)

    p = W @ eigen.z_k
    Mp = moment.M @ p
    y_unit = y / y_norm
    Nz_k = N @ eigen.z_k

    norm_p_h = norm.primal_norm(p)
    norm_mp_dual = norm.dual_norm(Mp)
    inner_yp = float(y_unit @ p)
    inner_ymp = norm.dual_inner(y_unit, Mp)

    checks = {
        "‖p‖_H = ‖z_k‖": (norm_p_h, float(np.linalg.norm(eigen.z_k))),
        "‖Mp‖_(H⁻¹) = ‖Nz_k‖": (norm_mp_dual, float(np.linalg.norm(Nz_k))),
        "⟨y,p⟩ = ⟨z,z_k⟩": (inner_yp, float(z @ eigen.z_k)),
        "⟨y,Mp⟩_(H⁻¹) = ⟨z,Nz_k⟩": (inner_ymp, float(z @ Nz_k)),
    }
    for name, (lhs, rhs) in checks.items():
        if not _close(lhs, rhs, settings.IDENTITY_RTOL):
            raise NumericalBreakdownError(f"方向恒等式 {name} 不成立: {lhs!r} vs {rhs!r}", code="identity")

    case2_ok = True
    if eigen.case == CaseTag.CASE2 and norm_mp_dual > 1.0 / n ** 2:
        case2_ok = False
        logger.warning(f"情形 2 的 ‖Mp‖={norm_mp_dual:.3e} 超过 1/n²={1.0 / n ** 2:.3e}")

    return Direction(p=p, eigen=eigen, norm_p_h=norm_p_h, norm_mp_dual=norm_mp_dual,
                     inner_yp=inner_yp, inner_ymp_dual=inner_ymp, case2_small_enough=case2_ok)


def choose_step(
    y: np.ndarray,
    p: np.ndarray,
    moment: SecondMoment,
    norm: NormState,
    a: Optional[float] = None,
) -> float:
    """
    ε = min{‖y‖/(4 L^{2a} ‖Mp‖), 1/(2 L^a), ½}，L = log₂(n+2)。

    ‖Mp‖ = 0 时只取后两项。
    """
    a = Config.get_instance().phase.LOG_EXPONENT_A if a is None else a
    L = log_factor(y.size)
    y_norm = norm.dual_norm(y)
    mp_norm = norm.dual_norm(moment.M @ p)
    eps = min(1.0 / (2.0 * L ** a), 0.5)
    if mp_norm > 0.0:
        eps = min(eps, y_norm / (4.0 * L ** (2.0 * a) * mp_norm))
    return float(eps)
