"""
乘性权重（势函数下降）阶段。

两种变体共用终止规则：log Φ < termination_phi_log 时返回可行点，
‖y‖_{H⁻¹} ≤ delta 时返回 λ 作为对偶证据。
"""

import math
from typing import List, Optional

import numpy as np

from ..direction import CaseTag, choose_direction, choose_step, default_K, log_factor
from ..exceptions import NumericalBreakdownError
from ..potential import PotentialEval, evaluate, phi_log, second_moment
from .base import BasePhase, OutcomeKind, PhaseConfig, PhaseFactory, PhaseMode, PhaseOutcome

# 下降界的相对容差
_BOUND_RTOL = 1e-9


def _log_or_neg_inf(value: float) -> float:
    return math.log(value) if value > 0.0 else -math.inf


def _psi(ev: PotentialEval) -> float:
    """Ψ = log‖y‖ + 2 log Φ"""
    return _log_or_neg_inf(ev.norm_y_dual) + 2.0 * ev.phi_log


def psi_window_constant(psi_history: List[float], n: int) -> Optional[float]:
    """按 n 次迭代为窗口，返回 min(窗口平均下降量)·n·L³；不足一个窗口时为 None"""
    if len(psi_history) <= n:
        return None
    values = np.asarray(psi_history)
    finite = np.isfinite(values)
    if not np.all(finite):
        values = values[finite]
        if values.size <= n:
            return None
    drops = (values[:-n] - values[n:]) / n
    return float(np.min(drops)) * n * log_factor(n) ** 3


@PhaseFactory.register
class MwuStandardPhase(BasePhase):
    """标准下降：x ← x + εH⁻¹y，ε 默认 ½，每步 Φ 至少乘以 e^{−ε(1−ε)‖y‖²}"""

    name = PhaseMode.MWU_STANDARD.value

    def execute(self, instance, cfg: PhaseConfig, norm, recorder) -> PhaseOutcome:
        budget = cfg.iteration_budget(instance.m)
        eps = cfg.fixed_step if cfg.fixed_step is not None else 0.5
        slack = math.log1p(_BOUND_RTOL)
        x = np.zeros(instance.n)
        ev = evaluate(instance, x, norm)

        for t in range(budget):
            if recorder is not None:
                recorder.record(phase=cfg.phase_index, iter=t, mode=self.name,
                                phi_log=ev.phi_log, norm_y_dual=ev.norm_y_dual, epsilon=eps)
            if ev.phi_log < cfg.termination_phi_log:
                return PhaseOutcome(kind=OutcomeKind.FEASIBLE, iterations=t, x=x, steps=t,
                                    stats={"phi_log": ev.phi_log})
            if ev.norm_y_dual <= cfg.delta:
                return self._evidence(ev.lambda_, iterations=t, steps=t, phi_log=ev.phi_log)

            p = ev.y if norm.is_identity else norm.inv @ ev.y
            x_next = x + eps * p
            ev_next = evaluate(instance, x_next, norm)
            bound = ev.phi_log - eps * (1.0 - eps) * ev.norm_y_dual ** 2
            if ev_next.phi_log > bound + slack:
                raise NumericalBreakdownError(
                    f"第 {t} 步势函数下降不足: log Φ={ev_next.phi_log!r} > 界 {bound!r}", code="phi_decrease"
                )
            x, ev = x_next, ev_next

        if ev.phi_log < cfg.termination_phi_log:
            return PhaseOutcome(kind=OutcomeKind.FEASIBLE, iterations=budget, x=x, steps=budget)
        self.logger.warning(f"标准下降在 {budget} 次迭代内没有终止 (log Φ={ev.phi_log:.4f})")
        return PhaseOutcome(kind=OutcomeKind.EXHAUSTED, iterations=budget, x=x, steps=budget)


@PhaseFactory.register
class MwuModifiedPhase(BasePhase):
    """
    改进下降：沿近似特征分量方向 p = H^{-1/2}z_k 走步长 ε。

    每步核对两条下降界：
        Φ(x+εp) ≤ Φ(x)(1 − ε⟨y,p⟩ + ε²pᵀMp)
        ‖∇Φ(x+εp)‖ ≤ ‖∇Φ(x)‖(1 + ε²pᵀMp/‖y‖ + (−ε⟨y,Mp⟩ + ε²‖Mp‖²)/‖y‖²)
    并要求 Ψ = log‖y‖ + 2 log Φ 严格下降；不降时步长减半。
    """

    name = PhaseMode.MWU_MODIFIED.value

    def execute(self, instance, cfg: PhaseConfig, norm, recorder) -> PhaseOutcome:
        settings = self.config.direction
        n = instance.n
        budget = cfg.iteration_budget(instance.m)
        K = default_K(n)
        x = np.zeros(n)
        ev = evaluate(instance, x, norm)
        psi_history: List[float] = []
        cases = {CaseTag.CASE1.value: 0, CaseTag.CASE2.value: 0}
        halvings = 0
        non_decrease = 0
        case2_unverified = 0

        def stats() -> dict:
            return {"phi_log": ev.phi_log, "cases": dict(cases), "halvings": halvings,
                    "psi_window_constant": psi_window_constant(psi_history, n),
                    "case2_unverified": case2_unverified}

        for t in range(budget):
            psi = _psi(ev)
            psi_history.append(psi)
            if ev.phi_log < cfg.termination_phi_log:
                self._record(recorder, cfg, t, ev, None)
                return PhaseOutcome(kind=OutcomeKind.FEASIBLE, iterations=t, x=x, steps=t, stats=stats())
            if ev.norm_y_dual <= cfg.delta:
                self._record(recorder, cfg, t, ev, None)
                return self._evidence(ev.lambda_, iterations=t, steps=t, **stats())

            moment = second_moment(instance, ev.lambda_)
            direction = choose_direction(ev.y, moment, norm, K)
            cases[direction.eigen.case.value] += 1
            if not direction.case2_small_enough:
                case2_unverified += 1
            p = direction.p
            pMp = float(p @ moment.M @ p)
            eps = choose_step(ev.y, p, moment, norm, cfg.log_exponent_a)
            self._record(recorder, cfg, t, ev, eps)

            for _ in range(settings.MAX_STEP_HALVINGS + 1):
                x_next = x + eps * p
                ev_next = evaluate(instance, x_next, norm)
                self._check_bounds(t, ev, ev_next, eps, pMp, direction)
                psi_next = _psi(ev_next)
                if psi_next < psi:
                    break
                eps *= 0.5
                halvings += 1
                self.logger.debug(f"第 {t} 步 Ψ 未下降，步长减半为 {eps:.3e}")

            if psi_next >= psi + settings.PSI_TOLERANCE:
                non_decrease += 1
                self.logger.warning(f"第 {t} 步 Ψ 未下降: {psi!r} -> {psi_next!r}")
                if non_decrease >= settings.MAX_NON_DECREASE:
                    raise NumericalBreakdownError(
                        f"Ψ 连续 {non_decrease} 次没有下降", code="psi_stalled"
                    )
            else:
                non_decrease = 0
            x, ev = x_next, ev_next

        if ev.phi_log < cfg.termination_phi_log:
            return PhaseOutcome(kind=OutcomeKind.FEASIBLE, iterations=budget, x=x, steps=budget, stats=stats())
        self.logger.warning(f"改进下降在 {budget} 次迭代内没有终止 (log Φ={ev.phi_log:.4f})")
        return PhaseOutcome(kind=OutcomeKind.EXHAUSTED, iterations=budget, x=x, steps=budget, stats=stats())

    def _record(self, recorder, cfg: PhaseConfig, t: int, ev: PotentialEval, eps: Optional[float]) -> None:
        if recorder is not None:
            recorder.record(phase=cfg.phase_index, iter=t, mode=self.name,
                            phi_log=ev.phi_log, norm_y_dual=ev.norm_y_dual, epsilon=eps)

    @staticmethod
    def _check_bounds(t: int, ev: PotentialEval, ev_next: PotentialEval, eps: float, pMp: float, direction) -> None:
        y_norm = ev.norm_y_dual
        inner_yp = direction.inner_yp * y_norm
        inner_ymp = direction.inner_ymp_dual * y_norm
        mp_norm = direction.norm_mp_dual

        phi_factor = 1.0 - eps * inner_yp + eps ** 2 * pMp
        ratio = math.exp(ev_next.phi_log - ev.phi_log)
        if ratio > phi_factor * (1.0 + _BOUND_RTOL):
            raise NumericalBreakdownError(
                f"第 {t} 步违反势函数下降界: {ratio!r} > {phi_factor!r}", code="phi_decrease"
            )

        grad_factor = 1.0 + eps ** 2 * pMp / y_norm + (-eps * inner_ymp + eps ** 2 * mp_norm ** 2) / y_norm ** 2
        grad_ratio = ratio * ev_next.norm_y_dual / y_norm
        if grad_ratio > grad_factor * (1.0 + _BOUND_RTOL):
            raise NumericalBreakdownError(
                f"第 {t} 步违反梯度下降界: {grad_ratio!r} > {grad_factor!r}", code="grad_decrease"
            )
