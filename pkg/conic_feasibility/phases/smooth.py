"""熵近端项的光滑感知机（过剩间隙方法）"""

import numpy as np

from ..potential import log_weights
from .base import BasePhase, OutcomeKind, PhaseConfig, PhaseFactory, PhaseMode, PhaseOutcome


@PhaseFactory.register
class SmoothPerceptronPhase(BasePhase):
    """
    光滑感知机：

        x_0 = u(λ̄)，μ_0 = 2，λ_0 = softmax(−Ax_0/μ_0)
        θ_k = 2/(k+3)
        x_{k+1} = (1−θ)(x_k + θu(λ_k)) + θ²u(softmax(−Ax_k/μ_k))
        μ_{k+1} = (1−θ)μ_k
        λ_{k+1} = (1−θ)λ_k + θ softmax(−Ax_{k+1}/μ_{k+1})

    其中 u(λ) = H⁻¹Aᵀλ，λ̄ 是单纯形上的均匀分布。
    """

    name = PhaseMode.SMOOTH.value

    def execute(self, instance, cfg: PhaseConfig, norm, recorder) -> PhaseOutcome:
        rows = instance.rows
        m = instance.m
        budget = cfg.iteration_budget(m)

        def u(lam: np.ndarray) -> np.ndarray:
            g = lam @ rows
            return g if norm.is_identity else norm.inv @ g

        def prox(x: np.ndarray, mu: float) -> np.ndarray:
            return log_weights(-(rows @ x) / mu)[1]

        mu = self.config.phase.SMOOTH_MU0
        x = u(np.full(m, 1.0 / m))
        lam = prox(x, mu)

        for k in range(budget):
            if float(np.min(rows @ x)) > 0.0:
                return PhaseOutcome(kind=OutcomeKind.FEASIBLE, iterations=k, x=x, steps=k)
            evidence = norm.dual_norm(lam @ rows)
            if recorder is not None:
                recorder.record(phase=cfg.phase_index, iter=k, mode=self.name, norm_y_dual=evidence)
            if evidence <= cfg.delta:
                return self._evidence(lam, iterations=k, steps=k, mu=mu)

            theta = 2.0 / (k + 3.0)
            x_next = (1.0 - theta) * (x + theta * u(lam)) + theta ** 2 * u(prox(x, mu))
            mu = (1.0 - theta) * mu
            lam = (1.0 - theta) * lam + theta * prox(x_next, mu)
            x = x_next

        if float(np.min(rows @ x)) > 0.0:
            return PhaseOutcome(kind=OutcomeKind.FEASIBLE, iterations=budget, x=x, steps=budget)
        self.logger.warning(f"光滑感知机在 {budget} 次迭代内没有终止 (μ={mu:.3e})")
        return PhaseOutcome(kind=OutcomeKind.EXHAUSTED, iterations=budget, x=x, steps=budget)
