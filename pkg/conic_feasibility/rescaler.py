"""
重缩放模块：细方向提取（高斯子集与去随机化）、秩一锥变换、多秩锥变换与范数更新。

所有操作返回新的实例或范数状态，不修改输入。
"""

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
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from scipy.special import erf

from .config import Config
from .exceptions import DirectionSearchError, NumericalBreakdownError, PreconditionError, SamplingError, ValidationError
from .instance import ConeInstance, MultiRankStep, Rank1Step, normalize_rows
from .linalg import log_det_spd, op_norm, sym_inv_sqrt, symmetrize
from .norm import NormState
from .potential import second_moment
from .seeding import GAUSSIAN_DIRECTION, MONTE_CARLO, derive_rng

logger = logging.getLogger(__name__)

RngLike = Union[int, np.random.Generator]

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


class RescaleKind(StrEnum):
    """重缩放类型"""
    RANK1 = "rank1"
    MULTI_RANK = "multirank"
    NORM_UPDATE = "norm"


class DirectionMethod(StrEnum):
    GAUSSIAN = "gaussian"
    DERANDOMIZED = "derandomized"


@dataclass(frozen=True, eq=False)
class RescaleReport:
    """一次重缩放的记录；det_growth_log 是所施加映射的对数行列式"""
    kind: RescaleKind
    det_growth_log: float
    direction: Optional[np.ndarray] = None
    M: Optional[np.ndarray] = None
    alpha: Optional[float] = None
    width_bound: Optional[float] = None
    evidence_norm: Optional[float] = None
    extras: Dict[str, Any] = field(default_factory=dict)

    def to_document(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {"kind": self.kind.value, "det_growth_log": self.det_growth_log}
        if self.direction is not None:
            doc["direction"] = [float(v) for v in self.direction]
        if self.alpha is not None:
            doc["alpha"] = self.alpha
        if self.width_bound is not None:
            doc["width_bound"] = self.width_bound
        if self.evidence_norm is not None:
            doc["evidence_norm"] = self.evidence_norm
        doc.update(self.extras)
        return doc


@dataclass(frozen=True, eq=False)
class ThinDirection:
    """细方向 c = Σ_{i∈J} λ_iA_i"""
    c: np.ndarray
    J: np.ndarray
    method: DirectionMethod
    draws: int = 0
    g: Optional[np.ndarray] = None

    def __iter__(self):
        yield self.c
        yield self.J


@dataclass(frozen=True)
class WidthEstimate:
    value: float
    accepted: int
    samples: int


def _rng(source: RngLike, label: str) -> np.random.Generator:
    if isinstance(source, np.random.Generator):
        return source
    return derive_rng(source, label)


def _check_lambda(lambda_: np.ndarray, m: int) -> np.ndarray:
    lam = np.asarray(lambda_, dtype=float)
    if lam.shape != (m,):
        raise ValidationError(f"λ 的维数 {lam.shape} 与 m={m} 不符", code="dimension_mismatch")
    if np.any(lam < 0.0) or abs(float(np.sum(lam)) - 1.0) > 1e-9:
        raise ValidationError("λ 必须是单纯形上的点", code="not_simplex")
    return lam


def _check_euclidean_unit(instance: ConeInstance) -> None:
    norms = np.linalg.norm(instance.rows, axis=1)
    if np.max(np.abs(norms - 1.0)) > 1e-9:
        raise ValidationError("行必须是欧氏单位向量", code="not_normalized")


def _better_sign_set(rows: np.ndarray, lam: np.ndarray, g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mask = rows @ g >= 0.0
    c_plus = (lam * mask) @ rows
    c_minus = (lam * ~mask) @ rows
    if np.linalg.norm(c_plus) >= np.linalg.norm(c_minus):
        return c_plus, np.flatnonzero(mask)
    return c_minus, np.flatnonzero(~mask)


def sample_unit_ball(rng: np.random.Generator, count: int, n: int) -> np.ndarray:
    """单位球内均匀采样：高斯方向 × U^{1/n} 半径"""
    g = rng.standard_normal((count, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.random(count)[:, None] ** (1.0 / n)


def estimate_width(instance: ConeInstance, c: np.ndarray, samples: int, seed: RngLike = 0) -> WidthEstimate:
    """
    蒙特卡洛估计 width(P, c) = max_{x∈P∩B} |⟨c,x⟩|/‖c‖。

    只用于测试预言；不在求解路径上。

    Raises:
        ValidationError: c = 0
        SamplingError: 没有样本落在锥内
    """
    c_norm = float(np.linalg.norm(c))
    if c_norm == 0.0:
        raise ValidationError("方向 c 不能为零", code="zero_direction")
    rng = _rng(seed, MONTE_CARLO)
    points = sample_unit_ball(rng, samples, instance.n)
    inside = points[np.all(points @ instance.rows.T > 0.0, axis=1)]
    if inside.shape[0] == 0:
        raise SamplingError(f"{samples} 个样本中没有落在锥内的点", code="zero_accepted")
    value = float(np.max(np.abs(inside @ c)) / c_norm)
    return WidthEstimate(value=value, accepted=int(inside.shape[0]), samples=samples)


def gaussian_threshold(n: int) -> float:
    """‖c‖ ≥ 1/(4√(πn))"""
    return 1.0 / (4.0 * math.sqrt(math.pi * n))


def gaussian_subset_direction(instance: ConeInstance, lambda_: np.ndarray, seed: RngLike = 0) -> ThinDirection:
    """
    随机高斯 g，J = {i : ⟨A_i,g⟩ ≥ 0}，取 J 与补集中 ‖c‖ 较大者。

    直到 ‖c‖ ≥ 1/(4√(πn)) 为止；超过重试上限时改用去随机化方向。
    """
    lam = _check_lambda(lambda_, instance.m)
    _check_euclidean_unit(instance)
    rng = _rng(seed, GAUSSIAN_DIRECTION)
    rows = instance.rows
    threshold = gaussian_threshold(instance.n)
    cap = Config.get_instance().rescale.GAUSSIAN_RETRY_CAP

    for draw in range(1, cap + 1):
        g = rng.standard_normal(instance.n)
        c, J = _better_sign_set(rows, lam, g)
        if np.linalg.norm(c) >= threshold:
            return ThinDirection(c=c, J=J, method=DirectionMethod.GAUSSIAN, draws=draw, g=g)

    logger.warning(f"高斯子集方向 {cap} 次抽样均未达到阈值 {threshold:.4e}，改用去随机化方向")
    fallback = derandomized_direction(instance, lam)
    return ThinDirection(c=fallback.c, J=fallback.J, method=DirectionMethod.DERANDOMIZED,
                         draws=cap, g=fallback.g)


def _expected_abs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """E|a + bZ|，Z ~ N(0,1)；b = 0 时为 |a|"""
    safe_b = np.where(b > 0.0, b, 1.0)
    smooth = safe_b * _SQRT_2_OVER_PI * np.exp(-a ** 2 / (2.0 * safe_b ** 2)) + a * erf(a / (safe_b * math.sqrt(2.0)))
    return np.where(b > 0.0, smooth, np.abs(a))


def derandomized_objective(rows: np.ndarray, lam: np.ndarray, g: np.ndarray) -> float:
    """F(g) = Σλ_i|⟨A_i,g⟩| − ‖g‖/(10√n)"""
    n = rows.shape[1]
    return float(lam @ np.abs(rows @ g) - np.linalg.norm(g) / (10.0 * math.sqrt(n)))


def derandomized_direction(instance: ConeInstance, lambda_: np.ndarray) -> ThinDirection:
    """
    条件期望法逐坐标确定 g。

    第 j 个坐标在候选网格上取使下式最大的值：
        Σλ_i E|a_i + b_iZ| − √(‖g_{≤j}‖² + #剩余坐标)/(10√n)
    其中 a_i 为已定坐标上的内积，b_i 为 A_i 剩余坐标的范数。

    Raises:
        DirectionSearchError: 最终 F(g) ≤ 0（携带 g）
    """
    lam = _check_lambda(lambda_, instance.m)
    rows = instance.rows
    m, n = rows.shape
    grid = np.asarray(Config.get_instance().rescale.DERANDOMIZE_GRID, dtype=float)
    scale = 10.0 * math.sqrt(n)

    # suffix[j] = Σ_{k≥j} A_ik²
    suffix = np.concatenate([np.cumsum((rows ** 2)[:, ::-1], axis=1)[:, ::-1], np.zeros((m, 1))], axis=1)
    g = np.zeros(n)
    a = np.zeros(m)
    prefix_sq = 0.0
    for j in range(n):
        b = np.sqrt(np.maximum(suffix[:, j + 1], 0.0))
        cand_a = a[None, :] + grid[:, None] * rows[:, j][None, :]
        gain = _expected_abs(cand_a, b[None, :]) @ lam
        penalty = np.sqrt(prefix_sq + grid ** 2 + (n - j - 1)) / scale
        best = int(np.argmax(gain - penalty))
        g[j] = grid[best]
        a = cand_a[best]
        prefix_sq += grid[best] ** 2

    value = derandomized_objective(rows, lam, g)
    if not value > 0.0:
        raise DirectionSearchError(f"去随机化方向的 F(g)={value!r} 不为正", vector=g, code="derandomize")
    c, J = _better_sign_set(rows, lam, g)
    v = g / np.linalg.norm(g)
    spread = float(lam @ np.abs(rows @ v))
    if spread < 1.0 / scale or np.linalg.norm(c) < 1.0 / (20.0 * math.sqrt(n)):
        raise DirectionSearchError(f"去随机化方向未达到保证: Σλ|⟨A,v⟩|={spread!r}", vector=g, code="derandomize")
    logger.debug(f"去随机化方向: F(g)={value:.4e}, ‖c‖={np.linalg.norm(c):.4e}")
    return ThinDirection(c=c, J=J, method=DirectionMethod.DERANDOMIZED, g=g)


def rank1_rescale(
    instance: ConeInstance,
    c: np.ndarray,
    lambda_: np.ndarray,
) -> Tuple[ConeInstance, Rank1Step, RescaleReport]:
    """
    rows ← rows·(I − ½ĉĉᵀ)，再按欧氏范数归一化。

    Raises:
        PreconditionError: ‖λA‖/‖c‖ > 1/(3√n)
    """
    lam = _check_lambda(lambda_, instance.m)
    _check_euclidean_unit(instance)
    n = instance.n
    c_norm = float(np.linalg.norm(c))
    if c_norm == 0.0:
        raise ValidationError("方向 c 不能为零", code="zero_direction")
    evidence = float(np.linalg.norm(lam @ instance.rows))
    width_bound = evidence / c_norm
    bound = 1.0 / (3.0 * math.sqrt(n))
    if width_bound > bound:
        raise PreconditionError(f"宽度上界 {width_bound:.4e} 超过 1/(3√n)={bound:.4e}",
                                measured=width_bound, bound=bound, code="width")

    c_hat = c / c_norm
    c_hat /= np.linalg.norm(c_hat)
    step = Rank1Step(c=c_hat)
    rows = instance.rows - 0.5 * np.outer(instance.rows @ c_hat, c_hat)
    rescaled = normalize_rows(instance.with_rows(rows), NormState.identity(n))
    report = RescaleReport(kind=RescaleKind.RANK1, det_growth_log=math.log(2.0), direction=c_hat,
                           width_bound=width_bound, evidence_norm=evidence)
    logger.debug(f"秩一重缩放: 宽度上界 {width_bound:.4e}")
    return rescaled, step, report


def _alpha(delta_max: float, alpha_cap: Optional[float]) -> float:
    cap = Config.get_instance().rescale.ALPHA_CAP if alpha_cap is None else alpha_cap
    if delta_max <= 0.0:
        raise NumericalBreakdownError("二阶矩的最大特征值为零", code="zero_moment")
    return float(min(1.0 / delta_max, cap))


def _check_det_growth(det_growth_log: float, alpha: float) -> None:
    # ½ log det(I+αM) ≥ α/4，容差 1e-9
    if 2.0 * det_growth_log < alpha / 2.0 + math.log1p(-1e-9):
        raise NumericalBreakdownError(
            f"行列式增长 {det_growth_log!r} 低于 α/4={alpha / 4.0!r}", code="det_growth"
        )


def multirank_rescale(
    instance: ConeInstance,
    lambda_: np.ndarray,
    alpha_cap: Optional[float] = None,
) -> Tuple[ConeInstance, MultiRankStep, RescaleReport]:
    """
    rows ← rows·(I+αM)^{-1/2}，α = min(1/‖M‖, alpha_cap)，再归一化。

    Raises:
        PreconditionError: ‖λA‖ > 1/(10n)
        NumericalBreakdownError: I+αM 失去正定性或行列式增长不足
    """
    lam = _check_lambda(lambda_, instance.m)
    _check_euclidean_unit(instance)
    n = instance.n
    evidence = float(np.linalg.norm(lam @ instance.rows))
    bound = Config.get_instance().phase.BETA_MULTIRANK / n
    if evidence > bound:
        raise PreconditionError(f"‖λA‖={evidence:.4e} 超过 1/(10n)={bound:.4e}",
                                measured=evidence, bound=bound, code="evidence")

    M = second_moment(instance, lam).M
    alpha = _alpha(op_norm(M), alpha_cap)
    shifted = np.eye(n) + alpha * M
    det_growth_log = 0.5 * log_det_spd(shifted)
    _check_det_growth(det_growth_log, alpha)

    step = MultiRankStep(M=M, alpha=alpha)
    rows = instance.rows @ sym_inv_sqrt(shifted)
    rescaled = normalize_rows(instance.with_rows(rows), NormState.identity(n))
    report = RescaleReport(kind=RescaleKind.MULTI_RANK, det_growth_log=det_growth_log, M=M,
                           alpha=alpha, evidence_norm=evidence)
    logger.debug(f"多秩重缩放: α={alpha:.4f}, ½log det={det_growth_log:.4f}")
    return rescaled, step, report


def norm_update(
    norm: NormState,
    lambda_: np.ndarray,
    instance: ConeInstance,
    alpha_cap: Optional[float] = None,
) -> Tuple[ConeInstance, NormState, RescaleReport]:
    """
    H ← H + αM，α = min(1/‖H⁻¹M‖, alpha_cap)，并延长系数记录。

    系数相对原始行记录：工作行 A_i = s_iÂ_i 时 h_i 增加 αλ_is_i²。
    返回按新对偶范数重新归一化的实例与新范数状态。

    Raises:
        PreconditionError: ‖λA‖_{H⁻¹} > 1/(10n)
        NumericalBreakdownError: 新的 H 不是正定的
    """
    lam = _check_lambda(lambda_, instance.m)
    n = instance.n
    evidence = norm.dual_norm(lam @ instance.rows)
    bound = Config.get_instance().phase.BETA_MULTIRANK / n
    if evidence > bound:
        raise PreconditionError(f"‖λA‖_(H⁻¹)={evidence:.4e} 超过 1/(10n)={bound:.4e}",
                                measured=evidence, bound=bound, code="evidence")

    M = second_moment(instance, lam).M
    W = norm.inv_sqrt
    N = symmetrize(W @ M @ W)
    alpha = _alpha(op_norm(N), alpha_cap)
    det_growth_log = 0.5 * log_det_spd(np.eye(n) + alpha * N)
    _check_det_growth(det_growth_log, alpha)

    coefficients = norm.coefficients if norm.coefficients is not None else np.zeros(instance.m)
    scale = np.linalg.norm(instance.rows, axis=1) / np.linalg.norm(instance.original_rows, axis=1)
    updated = NormState(H=symmetrize(norm.H + alpha * M),
                        coefficients=coefficients + alpha * lam * scale ** 2,
                        updates=norm.updates + 1)
    if not updated.min_eigenvalue > 0.0:
        raise NumericalBreakdownError("更新后的 H 不是正定的", code="not_spd")

    rescaled = normalize_rows(instance, updated)
    report = RescaleReport(kind=RescaleKind.NORM_UPDATE, det_growth_log=det_growth_log, M=M,
                           alpha=alpha, evidence_norm=evidence,
                           extras={"min_eigenvalue": updated.min_eigenvalue})
    logger.debug(f"范数更新: α={alpha:.4f}, λ_min(H)={updated.min_eigenvalue:.4e}")
    return rescaled, updated, report
