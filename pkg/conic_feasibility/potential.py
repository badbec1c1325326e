"""势函数引擎：Φ(x) = Σ e^{−⟨A_i,x⟩}、归一化梯度 y、权重 λ 与二阶矩 M

所有运算在对数域中进行并减去最大指数，Φ 本身只在显示时取指数。
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.special import logsumexp, softmax

from .exceptions import NumericalBreakdownError, ValidationError
from .instance import ConeInstance
from .linalg import symmetrize
from .norm import NormState

logger = logging.getLogger(__name__)

# ‖y‖_{H⁻¹} ≤ 1 的检查容差
_NORM_Y_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class PotentialEval:
    """势函数在 x 处的取值"""
    phi_log: float
    lambda_: np.ndarray
    y: np.ndarray
    norm_y_dual: float

    @property
    def phi(self) -> float:
        return float(np.exp(self.phi_log))


@dataclass(frozen=True, eq=False)
class SecondMoment:
    """二阶矩 M = Σλ_iA_iA_iᵀ = ∇²Φ/Φ"""
    M: np.ndarray

    @property
    def trace(self) -> float:
        return float(np.trace(self.M))


def log_weights(exponents: np.ndarray):
    """
    对指数向量做 log-sum-exp。

    Returns:
        (log Σ e^{e_i}, 归一化权重 softmax(e))
    """
    return float(logsumexp(exponents)), softmax(exponents)


def phi_log(instance: ConeInstance, x: np.ndarray) -> float:
    """log Φ(x)"""
    value, _ = log_weights(-(instance.rows @ x))
    return value


def evaluate(instance: ConeInstance, x: np.ndarray, norm: NormState) -> PotentialEval:
    """
    计算 log Φ、λ、y = Σλ_iA_i 与 ‖y‖_{H⁻¹}。

    Raises:
        ValidationError: x 含非有限数
        NumericalBreakdownError: ‖y‖_{H⁻¹} > 1（行未按对偶范数归一化或数值损坏）
    """
    if not np.all(np.isfinite(x)):
        raise ValidationError("势函数的自变量含非有限数", code="non_finite")
    value, lam = log_weights(-(instance.rows @ x))
    y = lam @ instance.rows
    norm_y = norm.dual_norm(y)
    if norm_y > 1.0 + _NORM_Y_SLACK:
        raise NumericalBreakdownError(
            f"‖y‖_(H⁻¹)={norm_y!r} 超过 1，行可能没有按对偶范数归一化", code="norm_y_exceeds_one"
        )
    return PotentialEval(phi_log=value, lambda_=lam, y=y, norm_y_dual=norm_y)


def second_moment(instance: ConeInstance, lambda_: np.ndarray) -> SecondMoment:
    """M = Σλ_iA_iA_iᵀ，取 (M + Mᵀ)/2 保证对称"""
    rows = instance.rows
    return SecondMoment(M=symmetrize((rows.T * lambda_) @ rows))


@dataclass
class GradCheckReport:
    """有限差分检查报告"""
    h: float
    grad_max_rel_err: float
    hess_max_rel_err: float
    directions: int
    grad_tol: float = 1e-6
    hess_tol: float = 1e-4
    details: List[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.grad_max_rel_err < self.grad_tol and self.hess_max_rel_err < self.hess_tol


def grad_check(
    instance: ConeInstance,
    x: np.ndarray,
    h: float = 1e-5,
    directions: int = 10,
    seed: Optional[int] = 0,
) -> GradCheckReport:
    """
    用中心差分核对 ∇Φ = −Φ·y 与方向二阶导 pᵀ∇²Φp = Φ·pᵀMp。

    梯度误差相对于解析梯度的最大分量度量；方向曲率误差逐方向相对度量。
    """
    if not 1e-7 <= h <= 1e-4:
        raise ValidationError(f"差分步长 h={h} 超出 [1e-7, 1e-4]", code="bad_step")

    def phi(point: np.ndarray) -> float:
        return float(np.exp(phi_log(instance, point)))

    value, lam = log_weights(-(instance.rows @ x))
    phi0 = float(np.exp(value))
    y = lam @ instance.rows
    analytic = -phi0 * y
    scale = max(float(np.max(np.abs(analytic))), 1e-300)

    n = instance.n
    grad_err = 0.0
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        fd = (phi(x + e) - phi(x - e)) / (2.0 * h)
        grad_err = max(grad_err, abs(fd - analytic[j]) / scale)

    M = second_moment(instance, lam).M
    rng = np.random.default_rng(seed)
    hess_err = 0.0
    details = []
    for _ in range(directions):
        p = rng.standard_normal(n)
        p /= np.linalg.norm(p)
        fd2 = (phi(x + h * p) - 2.0 * phi0 + phi(x - h * p)) / (h * h)
        exact = phi0 * float(p @ M @ p)
        err = abs(fd2 - exact) / max(abs(exact), 1e-300)
        hess_err = max(hess_err, err)
        details.append({"exact": exact, "finite_difference": fd2, "rel_err": err})

    report = GradCheckReport(h=h, grad_max_rel_err=grad_err, hess_max_rel_err=hess_err,
                             directions=directions, details=details)
    logger.debug(f"有限差分检查: 梯度误差 {grad_err:.2e}, 曲率误差 {hess_err:.2e}")
    return report
